//! Negative sampling, Adam and the minibatch training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tkg::{EntityId, StaticTriple};

use super::loss::{backprop, score_level, LossParams, Param};
use super::{EmbedError, EmbeddingModel, Norm};

/// How many negatives each positive gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeCount {
    /// Total per batch, spread evenly: `ceil(n / batch positives)` each.
    PerBatch(usize),
    PerPositive(usize),
}

impl NegativeCount {
    fn per_positive(self, batch: usize) -> usize {
        match self {
            NegativeCount::PerBatch(n) => n.div_ceil(batch.max(1)).max(1),
            NegativeCount::PerPositive(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives: NegativeCount,
    pub margin: f64,
    pub temperature: f64,
    pub norm: Norm,
    pub seed: u64,
    pub detach_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            dim: 100,
            learning_rate: 1e-3,
            batch_size: 500,
            negatives: NegativeCount::PerBatch(500),
            margin: 1.0,
            temperature: 0.5,
            norm: Norm::L1,
            seed: 0,
            detach_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |msg: &str| Err(EmbedError::Config(msg.to_owned()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if matches!(self.negatives, NegativeCount::PerBatch(0) | NegativeCount::PerPositive(0)) {
            return bad("negative sample count must be positive");
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("margin", self.margin), ("temperature", self.temperature)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmbedError::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }

    fn loss_params(&self) -> LossParams {
        LossParams { margin: self.margin, temperature: self.temperature, detach_weights: self.detach_weights }
    }
}

/// `n` corruptions of `t`, each replacing the subject or the object (fair
/// coin) by a uniformly drawn entity. A draw equal to `t` is redrawn once.
pub fn negative_sample<R: Rng>(t: StaticTriple, n: usize, num_entities: usize, rng: &mut R) -> Vec<StaticTriple> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let corrupt_subject = rng.gen_bool(0.5);
        let mut draw = || {
            let e = EntityId::from_index(rng.gen_range(0..num_entities));
            if corrupt_subject {
                StaticTriple { s: e, ..t }
            } else {
                StaticTriple { o: e, ..t }
            }
        };
        let mut neg = draw();
        if neg == t {
            neg = draw();
        }
        out.push(neg);
    }
    out
}

struct Adam {
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self { lr, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    /// Mean per-positive loss of every epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains from Xavier initialisation. Each step averages the loss over the
/// batch positives and applies one dense Adam update to all parameters.
/// Single-threaded, so the result is a pure function of data and config.
pub fn train(
    triples: &[StaticTriple],
    num_entities: usize,
    num_predicates: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, EmbedError> {
    cfg.validate()?;
    if triples.is_empty() {
        return Err(EmbedError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EmbeddingModel::xavier(num_entities, num_predicates, cfg.dim, cfg.norm, &mut rng);
    for &t in triples {
        model.check(t)?;
    }
    let params = cfg.loss_params();
    let dim = cfg.dim;
    let mut ent_grad = vec![0.0; model.entity_matrix().len()];
    let mut pred_grad = vec![0.0; model.predicate_matrix().len()];
    let mut ent_adam = Adam::new(ent_grad.len(), cfg.learning_rate);
    let mut pred_adam = Adam::new(pred_grad.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let k = cfg.negatives.per_positive(batch.len());
            let scale = 1.0 / batch.len() as f64;
            ent_grad.iter_mut().for_each(|g| *g = 0.0);
            pred_grad.iter_mut().for_each(|g| *g = 0.0);
            let mut sink = |param: Param, dir: &[f64], c: f64| {
                let row = match param {
                    Param::Entity(e) => &mut ent_grad[e.index() * dim..(e.index() + 1) * dim],
                    Param::Predicate(p) => &mut pred_grad[p.index() * dim..(p.index() + 1) * dim],
                };
                row.iter_mut().zip(dir).for_each(|(g, d)| *g += c * d);
            };
            for &i in batch {
                let pos = triples[i];
                let negs = negative_sample(pos, k, num_entities, &mut rng);
                let pos_score = model.score_unchecked(pos.s, pos.p, pos.o);
                let neg_scores: Vec<f64> = negs.iter().map(|t| model.score_unchecked(t.s, t.p, t.o)).collect();
                let sg = score_level(pos_score, &neg_scores, &params);
                if !sg.loss.is_finite() {
                    return Err(EmbedError::NonFinite { step, epoch, triple: pos });
                }
                total += sg.loss;
                backprop(&model, pos, scale * sg.d_pos, &mut sink);
                for (t, d) in negs.iter().zip(&sg.d_neg) {
                    backprop(&model, *t, scale * d, &mut sink);
                }
            }
            let (ent, pred) = model.params_mut();
            ent_adam.update(ent, &ent_grad);
            pred_adam.update(pred, &pred_grad);
            step += 1;
        }
        let mean = total / triples.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_loss.push(mean);
    }
    if !model.is_finite() {
        return Err(EmbedError::NonFinite { step, epoch: cfg.epochs, triple: triples[0] });
    }
    Ok(TrainOutcome { model, epoch_loss })
}
