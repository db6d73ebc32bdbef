//! Self-adversarial negative-sampling loss.
//!
//! `L = -log σ(γ - φ(pos)) - Σ_i w_i log σ(φ(neg_i) - γ)` with
//! `w = softmax(α (γ - φ(neg)))`. The weights are treated as constants by
//! default; the full derivative through them is available as an option.

use std::collections::BTreeMap;

use crate::tkg::{EntityId, PredicateId, StaticTriple};

use super::EmbeddingModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    /// γ
    pub margin: f64,
    /// α
    pub temperature: f64,
    /// Stop gradients through the adversarial weights.
    pub detach_weights: bool,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { margin: 1.0, temperature: 0.5, detach_weights: true }
    }
}

/// Gradients of the loss, keyed by parameter row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub entities: BTreeMap<EntityId, Vec<f64>>,
    pub predicates: BTreeMap<PredicateId, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub gradients: Gradients,
}

/// `log σ(x)`, stable for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    -(x.max(0.0) - x) - (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// Softmax of `α (γ - φ_i)`.
pub fn adversarial_weights(neg_scores: &[f64], margin: f64, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = neg_scores.iter().map(|s| temperature * (margin - s)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Loss value and its derivatives with respect to each score.
pub(crate) struct ScoreGrad {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub d_pos: f64,
    pub d_neg: Vec<f64>,
}

pub(crate) fn score_level(pos_score: f64, neg_scores: &[f64], p: &LossParams) -> ScoreGrad {
    let w = adversarial_weights(neg_scores, p.margin, p.temperature);
    let ell: Vec<f64> = neg_scores.iter().map(|s| log_sigmoid(s - p.margin)).collect();
    let weighted: f64 = w.iter().zip(&ell).map(|(a, b)| a * b).sum();
    let loss = -log_sigmoid(p.margin - pos_score) - weighted;
    let d_pos = sigmoid(pos_score - p.margin);
    let d_neg = neg_scores
        .iter()
        .zip(&w)
        .zip(&ell)
        .map(|((s, wj), lj)| {
            let direct = -wj * sigmoid(p.margin - s);
            if p.detach_weights {
                direct
            } else {
                direct + p.temperature * wj * (lj - weighted)
            }
        })
        .collect();
    ScoreGrad { loss, weights: w, d_pos, d_neg }
}

/// Adds `coef * dφ/dθ` of `t`'s score to the gradient rows via `sink`.
pub(crate) fn backprop(
    m: &EmbeddingModel,
    t: StaticTriple,
    coef: f64,
    sink: &mut impl FnMut(Param, &[f64], f64),
) {
    let (_, dir) = m.score_and_direction(t);
    sink(Param::Entity(t.s), &dir, coef);
    sink(Param::Predicate(t.p), &dir, coef);
    sink(Param::Entity(t.o), &dir, -coef);
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Param {
    Entity(EntityId),
    Predicate(PredicateId),
}

/// Loss for one positive and its negatives, with exact gradients for every
/// touched vector.
///
/// Panics if `negatives` is empty or ids are out of range.
pub fn loss(m: &EmbeddingModel, positive: StaticTriple, negatives: &[StaticTriple], params: &LossParams) -> LossOutput {
    assert!(!negatives.is_empty(), "loss needs at least one negative");
    let pos = m.score_unchecked(positive.s, positive.p, positive.o);
    let neg: Vec<f64> = negatives.iter().map(|t| m.score_unchecked(t.s, t.p, t.o)).collect();
    let sg = score_level(pos, &neg, params);
    let mut grads = Gradients::default();
    let dim = m.dim();
    let mut sink = |param: Param, dir: &[f64], c: f64| {
        let row = match param {
            Param::Entity(e) => grads.entities.entry(e).or_insert_with(|| vec![0.0; dim]),
            Param::Predicate(p) => grads.predicates.entry(p).or_insert_with(|| vec![0.0; dim]),
        };
        row.iter_mut().zip(dir).for_each(|(g, d)| *g += c * d);
    };
    backprop(m, positive, sg.d_pos, &mut sink);
    for (t, d) in negatives.iter().zip(&sg.d_neg) {
        backprop(m, *t, *d, &mut sink);
    }
    LossOutput { loss: sg.loss, weights: sg.weights, gradients: grads }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(s: u32, p: u32, o: u32) -> StaticTriple {
        StaticTriple::new(EntityId(s), PredicateId(p), EntityId(o))
    }

    #[test]
    fn weight_examples() {
        assert_eq!(adversarial_weights(&[3.7], 1.0, 9.0), vec![1.0]);
        assert_eq!(adversarial_weights(&[2.0, 2.0], 1.0, 0.5), vec![0.5, 0.5]);
        let w = adversarial_weights(&[0.1, 5.0, 2.0], 1.0, 2.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w[0] > w[2] && w[2] > w[1]);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((sigmoid(-800.0)).abs() < 1e-300 && (sigmoid(800.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_closed_form() {
        // d = 1, L1: φ(pos) = |0 + 0 - 0| = 0, φ(neg) = |1 + 0 - 0| = 1.
        let m = EmbeddingModel::from_parts(1, Norm::L1, vec![0.0, 1.0], vec![0.0]).unwrap();
        let out = loss(&m, t(0, 0, 0), &[t(1, 0, 0)], &LossParams::default());
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = -sig(1.0).ln() - sig(0.0).ln();
        assert!((out.loss - expected).abs() < 1e-14);
    }

    fn random_model(rng: &mut ChaCha8Rng, d: usize, norm: Norm) -> EmbeddingModel {
        let ent = (0..5 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pred = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingModel::from_parts(d, norm, ent, pred).unwrap()
    }

    /// No translation component within `gap` of the L1 kink.
    fn away_from_kinks(m: &EmbeddingModel, ts: &[StaticTriple], gap: f64) -> bool {
        ts.iter().all(|&t| m.translation(t).iter().all(|v| v.abs() > gap))
    }

    fn gradient_check(seed: u64, d: usize, norm: Norm, detach: bool) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, pos, negs) = loop {
            let m = random_model(&mut rng, d, norm);
            let pos = t(rng.gen_range(0..5), rng.gen_range(0..2), rng.gen_range(0..5));
            let n = rng.gen_range(1..6);
            let negs: Vec<StaticTriple> = (0..n).map(|_| t(rng.gen_range(0..5), pos.p.0, rng.gen_range(0..5))).collect();
            let all: Vec<StaticTriple> = std::iter::once(pos).chain(negs.iter().copied()).collect();
            if away_from_kinks(&m, &all, 1e-3) {
                break (m, pos, negs);
            }
        };
        let params = LossParams {
            margin: rng.gen_range(0.5..3.0),
            temperature: rng.gen_range(0.1..2.0),
            detach_weights: detach,
        };
        let out = loss(&m, pos, &negs, &params);
        let weights = adversarial_weights(
            &negs.iter().map(|x| m.score_unchecked(x.s, x.p, x.o)).collect::<Vec<_>>(),
            params.margin,
            params.temperature,
        );
        // With detached weights the reference objective freezes w at the
        // current point.
        let objective = |m: &EmbeddingModel| {
            let pos_s = m.score_unchecked(pos.s, pos.p, pos.o);
            let neg: Vec<f64> = negs.iter().map(|x| m.score_unchecked(x.s, x.p, x.o)).collect();
            let w = if detach { weights.clone() } else { adversarial_weights(&neg, params.margin, params.temperature) };
            -log_sigmoid(params.margin - pos_s)
                - w.iter().zip(&neg).map(|(w, s)| w * log_sigmoid(s - params.margin)).sum::<f64>()
        };
        // five-point stencil; kinks are at least 1e-3 away
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let rows = out
            .gradients
            .entities
            .iter()
            .map(|(e, g)| (true, e.index(), g))
            .chain(out.gradients.predicates.iter().map(|(p, g)| (false, p.index(), g)));
        for (is_entity, row, grad) in rows {
            for k in 0..d {
                let bump = |delta: f64| {
                    let mut mm = m.clone();
                    let (ent, pred) = mm.params_mut();
                    let buf = if is_entity { ent } else { pred };
                    buf[row * d + k] += delta;
                    objective(&mm)
                };
                let numeric = (-bump(2.0 * h) + 8.0 * bump(h) - 8.0 * bump(-h) + bump(-2.0 * h)) / (12.0 * h);
                let err = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..100 {
            for norm in [Norm::L1, Norm::L2] {
                for detach in [true, false] {
                    let d = 1 + (seed as usize % 16);
                    let err = gradient_check(seed, d, norm, detach);
                    assert!(err < 1e-4, "seed {seed} d {d} {norm} detach={detach}: {err}");
                }
            }
        }
    }

    #[test]
    fn loss_is_permutation_invariant_in_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 6, Norm::L2);
        let negs = vec![t(1, 0, 2), t(3, 0, 4), t(0, 0, 4), t(2, 0, 2)];
        let mut rev = negs.clone();
        rev.reverse();
        let a = loss(&m, t(0, 0, 1), &negs, &LossParams::default());
        let b = loss(&m, t(0, 0, 1), &rev, &LossParams::default());
        assert!((a.loss - b.loss).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn weights_form_a_distribution(scores in proptest::collection::vec(0.0f64..50.0, 1..20), temp in 0.01f64..5.0) {
            let w = adversarial_weights(&scores, 1.0, temp);
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
