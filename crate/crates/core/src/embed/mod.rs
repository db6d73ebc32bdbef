//! Translational embedding model: `score(s, p, o) = ||e_s + e_p - e_o||`,
//! lower is more plausible.

mod checkpoint;
mod loss;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::tkg::{EntityId, PredicateId, StaticTriple};

pub use checkpoint::CheckpointError;
pub use loss::{adversarial_weights, loss, Gradients, LossOutput, LossParams};
pub use train::{negative_sample, train, NegativeCount, TrainConfig, TrainOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("entity {id} out of range for {len} entities")]
    EntityOutOfRange { id: EntityId, len: usize },
    #[error("predicate {id} out of range for {len} predicates")]
    PredicateOutOfRange { id: PredicateId, len: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at step {step} (epoch {epoch}) on triple ({s}, {p}, {o})", s = triple.s, p = triple.p, o = triple.o)]
    NonFinite { step: usize, epoch: usize, triple: StaticTriple },
    #[error("matrix of length {len} does not match {rows} rows of dimension {dim}")]
    Shape { len: usize, rows: usize, dim: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
        }
    }

    fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L1" | "1" => Ok(Norm::L1),
            "L2" | "2" => Ok(Norm::L2),
            _ => Err(format!("unknown norm '{s}' (expected L1 or L2)")),
        }
    }
}

/// Entity and predicate vectors, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    norm: Norm,
    entities: Vec<f64>,
    predicates: Vec<f64>,
}

impl EmbeddingModel {
    pub fn from_parts(dim: usize, norm: Norm, entities: Vec<f64>, predicates: Vec<f64>) -> Result<Self, EmbedError> {
        for m in [&entities, &predicates] {
            if dim == 0 || m.len() % dim != 0 {
                return Err(EmbedError::Shape { len: m.len(), rows: m.len() / dim.max(1), dim });
            }
        }
        Ok(Self { dim, norm, entities, predicates })
    }

    /// Xavier-uniform initialisation with fan-in = fan-out = `dim`.
    pub fn xavier<R: Rng>(num_entities: usize, num_predicates: usize, dim: usize, norm: Norm, rng: &mut R) -> Self {
        let bound = (6.0 / (2 * dim) as f64).sqrt();
        let mut draw = |n: usize| (0..n * dim).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>();
        let entities = draw(num_entities);
        let predicates = draw(num_predicates);
        Self { dim, norm, entities, predicates }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len() / self.dim
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        &self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn predicate(&self, p: PredicateId) -> &[f64] {
        &self.predicates[p.index() * self.dim..(p.index() + 1) * self.dim]
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn predicate_matrix(&self) -> &[f64] {
        &self.predicates
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entities, &mut self.predicates)
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.predicates).all(|v| v.is_finite())
    }

    pub fn check(&self, t: StaticTriple) -> Result<(), EmbedError> {
        for e in [t.s, t.o] {
            if e.index() >= self.num_entities() {
                return Err(EmbedError::EntityOutOfRange { id: e, len: self.num_entities() });
            }
        }
        if t.p.index() >= self.num_predicates() {
            return Err(EmbedError::PredicateOutOfRange { id: t.p, len: self.num_predicates() });
        }
        Ok(())
    }

    pub fn score(&self, t: StaticTriple) -> Result<f64, EmbedError> {
        self.check(t)?;
        Ok(self.score_unchecked(t.s, t.p, t.o))
    }

    /// Panics on out-of-range ids.
    #[inline]
    pub fn score_unchecked(&self, s: EntityId, p: PredicateId, o: EntityId) -> f64 {
        let (es, ep, eo) = (self.entity(s), self.predicate(p), self.entity(o));
        match self.norm {
            Norm::L1 => (0..self.dim).map(|k| (es[k] + ep[k] - eo[k]).abs()).sum(),
            Norm::L2 => (0..self.dim).map(|k| (es[k] + ep[k] - eo[k]).powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// `e_s + e_p - e_o`.
    fn translation(&self, t: StaticTriple) -> Vec<f64> {
        let (es, ep, eo) = (self.entity(t.s), self.predicate(t.p), self.entity(t.o));
        (0..self.dim).map(|k| es[k] + ep[k] - eo[k]).collect()
    }

    /// Score and its gradient with respect to the translation vector.
    /// The norm's kink at zero gets the zero subgradient.
    fn score_and_direction(&self, t: StaticTriple) -> (f64, Vec<f64>) {
        let v = self.translation(t);
        let score = self.norm.of(&v);
        let dir = match self.norm {
            Norm::L1 => v.iter().map(|x| if *x == 0.0 { 0.0 } else { x.signum() }).collect(),
            Norm::L2 if score > 0.0 => v.iter().map(|x| x / score).collect(),
            Norm::L2 => vec![0.0; self.dim],
        };
        (score, dir)
    }
}
