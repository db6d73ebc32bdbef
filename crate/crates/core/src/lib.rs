//! Temporal knowledge graph embedding with static models.
//!
//! The crate turns a temporal knowledge graph (facts carrying validity
//! intervals) into a static one whose predicates encode time, then trains a
//! translational embedding on it and evaluates filtered link prediction.
//!
//! * [`tkg`]: data model, dataset loading, slicing and stripping.
//! * [`proximity`]: neighbourhood proximity measures and per-predicate
//!   signature series.
//! * [`cpd`]: kernel change point detection with bottom-up search.
//! * [`transform`]: timestamping, splitting (time, count, CPD, random) and
//!   merging, all tracked by a [`transform::PredicateLineage`].
//! * [`leakage`]: duplicate audits and intra/inter set filtering.
//! * [`embed`]: TransE with self-adversarial negative sampling and Adam.
//! * [`eval`]: filtered ranking, MRR / hits@k and temporally filtered
//!   predicate prediction.

pub mod cpd;
pub mod embed;
pub mod eval;
pub mod leakage;
pub mod proximity;
pub mod tkg;
pub mod transform;

pub use tkg::{EntityId, PredicateId, Quintuple, Split, StaticTriple, TemporalGraph, TimeId};
