use std::sync::{Arc, OnceLock};

use thiserror::Error;

use super::{EntityId, PredicateId, Quintuple, Split, StaticTriple, TimeAxis, TimeId, Vocab};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("fact {index} references entity {id} but only {len} entities exist")]
    EntityOutOfRange { index: usize, id: u32, len: usize },
    #[error("fact {index} references predicate {id} but only {len} predicates exist")]
    PredicateOutOfRange { index: usize, id: u32, len: usize },
    #[error("fact {index} references time {id} but the axis has {len} timestamps")]
    TimeOutOfRange { index: usize, id: u32, len: usize },
    #[error("fact {index} ends before it begins")]
    ReversedInterval { index: usize },
    #[error("predicate {0} is not part of the graph")]
    UnknownPredicate(PredicateId),
    #[error("time {0} is not on the graph's time axis")]
    UnknownTime(TimeId),
}

/// A multiset of valid-time facts, each labelled with its original split.
///
/// The graph is immutable once built; transformations produce new graphs.
/// The vocabularies define the entity, predicate and timestamp sets and are
/// shared (not copied) between a graph and the subgraphs sliced from it.
#[derive(Debug)]
pub struct TemporalGraph {
    entities: Arc<Vocab>,
    predicates: Arc<Vocab>,
    times: Arc<TimeAxis>,
    facts: Vec<Quintuple>,
    splits: Vec<Split>,
    by_predicate: OnceLock<Vec<Vec<u32>>>,
}

impl Clone for TemporalGraph {
    fn clone(&self) -> Self {
        Self {
            entities: Arc::clone(&self.entities),
            predicates: Arc::clone(&self.predicates),
            times: Arc::clone(&self.times),
            facts: self.facts.clone(),
            splits: self.splits.clone(),
            by_predicate: OnceLock::new(),
        }
    }
}

impl PartialEq for TemporalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.predicates == other.predicates
            && self.times == other.times
            && self.facts == other.facts
            && self.splits == other.splits
    }
}

impl TemporalGraph {
    pub fn new(
        entities: Arc<Vocab>,
        predicates: Arc<Vocab>,
        times: Arc<TimeAxis>,
        facts: Vec<(Quintuple, Split)>,
    ) -> Result<Self, GraphError> {
        let (facts, splits): (Vec<_>, Vec<_>) = facts.into_iter().unzip();
        for (index, f) in facts.iter().enumerate() {
            for e in [f.s, f.o] {
                if e.index() >= entities.len() {
                    return Err(GraphError::EntityOutOfRange { index, id: e.0, len: entities.len() });
                }
            }
            if f.p.index() >= predicates.len() {
                return Err(GraphError::PredicateOutOfRange {
                    index,
                    id: f.p.0,
                    len: predicates.len(),
                });
            }
            for t in [f.b, f.e] {
                if t.index() >= times.len() {
                    return Err(GraphError::TimeOutOfRange { index, id: t.0, len: times.len() });
                }
            }
            if f.b > f.e {
                return Err(GraphError::ReversedInterval { index });
            }
        }
        Ok(Self::from_parts_unchecked(entities, predicates, times, facts, splits))
    }

    pub(crate) fn from_parts_unchecked(
        entities: Arc<Vocab>,
        predicates: Arc<Vocab>,
        times: Arc<TimeAxis>,
        facts: Vec<Quintuple>,
        splits: Vec<Split>,
    ) -> Self {
        debug_assert_eq!(facts.len(), splits.len());
        Self {
            entities,
            predicates,
            times,
            facts,
            splits,
            by_predicate: OnceLock::new(),
        }
    }

    /// A graph over the same vocabularies holding the selected facts.
    fn subgraph(&self, keep: impl Fn(&Quintuple) -> bool) -> Self {
        let (facts, splits) = self
            .iter()
            .filter(|(f, _)| keep(f))
            .unzip();
        Self::from_parts_unchecked(
            Arc::clone(&self.entities),
            Arc::clone(&self.predicates),
            Arc::clone(&self.times),
            facts,
            splits,
        )
    }

    pub fn entities(&self) -> &Arc<Vocab> {
        &self.entities
    }

    pub fn predicates(&self) -> &Arc<Vocab> {
        &self.predicates
    }

    pub fn times(&self) -> &Arc<TimeAxis> {
        &self.times
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn num_timestamps(&self) -> usize {
        self.times.len()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[Quintuple] {
        &self.facts
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn iter(&self) -> impl Iterator<Item = (Quintuple, Split)> + '_ {
        self.facts.iter().copied().zip(self.splits.iter().copied())
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    pub fn predicate_ids(&self) -> impl Iterator<Item = PredicateId> {
        (0..self.num_predicates()).map(PredicateId::from_index)
    }

    pub fn predicate_label(&self, p: PredicateId) -> &str {
        self.predicates.label(p.0)
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn time_label(&self, t: TimeId) -> String {
        self.times.label(t)
    }

    /// Indices of the facts of every predicate, built on first use.
    pub fn predicate_index(&self) -> &[Vec<u32>] {
        self.by_predicate.get_or_init(|| {
            let mut idx = vec![Vec::new(); self.num_predicates()];
            for (i, f) in self.facts.iter().enumerate() {
                idx[f.p.index()].push(i as u32);
            }
            idx
        })
    }

    /// Number of facts per predicate, `|T^{p=r}|`.
    pub fn predicate_counts(&self) -> Vec<usize> {
        self.predicate_index().iter().map(Vec::len).collect()
    }

    /// Facts valid at `t`: `b <= t <= e`.
    pub fn slice_at(&self, t: TimeId) -> Result<Self, GraphError> {
        if t.index() >= self.num_timestamps() {
            return Err(GraphError::UnknownTime(t));
        }
        Ok(self.subgraph(|f| f.valid_at(t)))
    }

    /// Facts whose predicate is `r`.
    pub fn restrict_predicate(&self, r: PredicateId) -> Result<Self, GraphError> {
        if r.index() >= self.num_predicates() {
            return Err(GraphError::UnknownPredicate(r));
        }
        let idx = &self.predicate_index()[r.index()];
        let facts = idx.iter().map(|&i| self.facts[i as usize]).collect();
        let splits = idx.iter().map(|&i| self.splits[i as usize]).collect();
        Ok(Self::from_parts_unchecked(
            Arc::clone(&self.entities),
            Arc::clone(&self.predicates),
            Arc::clone(&self.times),
            facts,
            splits,
        ))
    }

    /// Earliest begin and latest end over the facts of `r`.
    pub fn predicate_span(&self, r: PredicateId) -> Option<(TimeId, TimeId)> {
        let idx = self.predicate_index().get(r.index())?;
        let first = idx.iter().map(|&i| self.facts[i as usize].b).min()?;
        let last = idx.iter().map(|&i| self.facts[i as usize].e).max()?;
        Some((first, last))
    }
}

/// Incremental construction from string labels.
///
/// Entities and predicates are interned in insertion order; times are ids on
/// the supplied axis.
#[derive(Debug)]
pub struct GraphBuilder {
    entities: Vocab,
    predicates: Vocab,
    times: TimeAxis,
    facts: Vec<(Quintuple, Split)>,
}

impl GraphBuilder {
    pub fn new(times: TimeAxis) -> Self {
        Self {
            entities: Vocab::new(),
            predicates: Vocab::new(),
            times,
            facts: Vec::new(),
        }
    }

    /// Pre-registers entity labels so their ids follow the given order.
    pub fn with_entities<'a>(mut self, labels: impl IntoIterator<Item = &'a str>) -> Self {
        for l in labels {
            self.entities.intern(l);
        }
        self
    }

    pub fn with_predicates<'a>(mut self, labels: impl IntoIterator<Item = &'a str>) -> Self {
        for l in labels {
            self.predicates.intern(l);
        }
        self
    }

    pub fn add(&mut self, s: &str, p: &str, o: &str, b: u32, e: u32, split: Split) -> &mut Self {
        let f = Quintuple {
            s: EntityId(self.entities.intern(s)),
            p: PredicateId(self.predicates.intern(p)),
            o: EntityId(self.entities.intern(o)),
            b: TimeId(b),
            e: TimeId(e),
        };
        self.facts.push((f, split));
        self
    }

    pub fn build(self) -> Result<TemporalGraph, GraphError> {
        TemporalGraph::new(
            Arc::new(self.entities),
            Arc::new(self.predicates),
            Arc::new(self.times),
            self.facts,
        )
    }
}

/// Atemporal triples per split, duplicates retained.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StaticSplits {
    pub train: Vec<StaticTriple>,
    pub valid: Vec<StaticTriple>,
    pub test: Vec<StaticTriple>,
}

impl StaticSplits {
    pub fn get(&self, split: Split) -> &[StaticTriple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut Vec<StaticTriple> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &StaticTriple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Discards temporal scopes, keeping every fact as one triple in its split.
pub fn strip_temporal(g: &TemporalGraph) -> StaticSplits {
    let mut out = StaticSplits::default();
    for (f, split) in g.iter() {
        out.get_mut(split).push(f.triple());
    }
    out
}
