//! Mutable working state shared by the transformations.
//!
//! Predicates live in slots that are never reused; facts point at slots.
//! `finish` compacts live slots into dense predicate ids, names the derived
//! predicates and builds the lineage.

use std::collections::HashSet;
use std::sync::Arc;

use crate::tkg::{PredicateId, Quintuple, Split, TemporalGraph, TimeId, Vocab};

use super::PredicateLineage;

#[derive(Clone, Debug)]
pub(crate) enum Origin {
    /// Predicate carried over from the input graph with its label.
    Existing(String),
    Stamp,
    Split,
    Merged,
}

#[derive(Clone, Debug)]
pub(crate) struct Slot {
    pub source: PredicateId,
    pub interval: (TimeId, TimeId),
    pub stamp: Option<TimeId>,
    pub origin: Origin,
    pub facts: Vec<u32>,
    pub alive: bool,
}

pub(crate) struct Work<'g> {
    base: &'g TemporalGraph,
    sources: Arc<Vocab>,
    /// `p` holds a slot index, not a predicate id.
    facts: Vec<Quintuple>,
    splits: Vec<Split>,
    pub slots: Vec<Slot>,
    live: usize,
}

impl<'g> Work<'g> {
    /// Slots mirror `g`'s predicates one to one.
    pub fn from_graph(g: &'g TemporalGraph, lineage: &PredicateLineage) -> Self {
        let mut slots: Vec<Slot> = g
            .predicate_ids()
            .map(|p| Slot {
                source: lineage.source(p),
                interval: lineage.interval(p),
                stamp: lineage.stamp(p),
                origin: Origin::Existing(g.predicate_label(p).to_owned()),
                facts: Vec::new(),
                alive: true,
            })
            .collect();
        for (i, f) in g.facts().iter().enumerate() {
            slots[f.p.index()].facts.push(i as u32);
        }
        Self {
            base: g,
            sources: Arc::clone(lineage.sources()),
            facts: g.facts().to_vec(),
            splits: g.splits().to_vec(),
            live: slots.len(),
            slots,
        }
    }

    /// No predicates and no facts yet; `g` supplies entities and time.
    pub fn empty(g: &'g TemporalGraph, sources: Arc<Vocab>) -> Self {
        Self {
            base: g,
            sources,
            facts: Vec::new(),
            splits: Vec::new(),
            slots: Vec::new(),
            live: 0,
        }
    }

    pub fn live(&self) -> usize {
        self.live
    }

    pub fn add_slot(&mut self, source: PredicateId, interval: (TimeId, TimeId), stamp: Option<TimeId>, origin: Origin) -> usize {
        self.slots.push(Slot { source, interval, stamp, origin, facts: Vec::new(), alive: true });
        self.live += 1;
        self.slots.len() - 1
    }

    pub fn add_fact(&mut self, mut f: Quintuple, split: Split, slot: usize) {
        f.p = PredicateId::from_index(slot);
        self.slots[slot].facts.push(self.facts.len() as u32);
        self.facts.push(f);
        self.splits.push(split);
    }

    /// Earliest begin and latest end among the slot's facts.
    pub fn span(&self, slot: usize) -> Option<(TimeId, TimeId)> {
        let ids = &self.slots[slot].facts;
        let first = self.facts[*ids.first()? as usize];
        Some(ids.iter().fold((first.b, first.e), |(b, e), &i| {
            let f = &self.facts[i as usize];
            (b.min(f.b), e.max(f.e))
        }))
    }

    pub fn fact_intervals(&self, slot: usize) -> impl Iterator<Item = (TimeId, TimeId)> + '_ {
        self.slots[slot].facts.iter().map(|&i| {
            let f = &self.facts[i as usize];
            (f.b, f.e)
        })
    }

    /// Splits `slot` at `t`. Facts spanning `t` are cut into two halves that
    /// share the boundary timestamp; others move whole.
    pub fn split(&mut self, slot: usize, t: TimeId) -> (usize, usize) {
        let parent = &self.slots[slot];
        let source = parent.source;
        let (pb, pe) = parent.interval;
        let left = self.add_slot(source, (pb.min(t), t), None, Origin::Split);
        let right = self.add_slot(source, (t, pe.max(t)), None, Origin::Split);
        let facts = std::mem::take(&mut self.slots[slot].facts);
        self.slots[slot].alive = false;
        self.live -= 1;
        for i in facts {
            let f = self.facts[i as usize];
            if f.b <= t && t <= f.e {
                let idx = i as usize;
                self.facts[idx].e = t;
                self.facts[idx].p = PredicateId::from_index(left);
                self.slots[left].facts.push(i);
                let split = self.splits[idx];
                self.add_fact(Quintuple { b: t, ..f }, split, right);
            } else if f.e <= t {
                self.facts[i as usize].p = PredicateId::from_index(left);
                self.slots[left].facts.push(i);
            } else {
                self.facts[i as usize].p = PredicateId::from_index(right);
                self.slots[right].facts.push(i);
            }
        }
        (left, right)
    }

    /// Replaces two slots of one source by a slot covering both intervals.
    pub fn merge(&mut self, a: usize, b: usize) -> usize {
        debug_assert_eq!(self.slots[a].source, self.slots[b].source);
        let interval = (
            self.slots[a].interval.0.min(self.slots[b].interval.0),
            self.slots[a].interval.1.max(self.slots[b].interval.1),
        );
        let m = self.add_slot(self.slots[a].source, interval, None, Origin::Merged);
        for old in [a, b] {
            let facts = std::mem::take(&mut self.slots[old].facts);
            for &i in &facts {
                self.facts[i as usize].p = PredicateId::from_index(m);
            }
            self.slots[m].facts.extend(facts);
            self.slots[old].alive = false;
            self.live -= 1;
        }
        m
    }

    pub fn slot_label(&self, slot: usize) -> String {
        let s = &self.slots[slot];
        match &s.origin {
            Origin::Existing(label) => label.clone(),
            _ => format!(
                "{}[{},{}]",
                self.sources.label(s.source.0),
                self.base.time_label(s.interval.0),
                self.base.time_label(s.interval.1)
            ),
        }
    }

    pub fn finish(self) -> (TemporalGraph, PredicateLineage) {
        let mut order: Vec<usize> = (0..self.slots.len()).filter(|&i| self.slots[i].alive).collect();
        order.sort_by_key(|&i| (self.slots[i].source, self.slots[i].interval, i));

        let mut taken: HashSet<String> = self
            .slots
            .iter()
            .filter(|s| s.alive)
            .filter_map(|s| match &s.origin {
                Origin::Existing(l) => Some(l.clone()),
                _ => None,
            })
            .collect();
        let mut split_counter: Vec<usize> = vec![0; self.sources.len()];
        let mut labels = Vec::with_capacity(order.len());
        let mut remap = vec![u32::MAX; self.slots.len()];
        let mut lineage = PredicateLineage::with_sources(Arc::clone(&self.sources));
        for (new_id, &i) in order.iter().enumerate() {
            let s = &self.slots[i];
            let src = self.sources.label(s.source.0);
            let t = |t: TimeId| self.base.time_label(t);
            let label = match &s.origin {
                Origin::Existing(l) => l.clone(),
                Origin::Stamp => unique(&mut taken, format!("{src}@{}", t(s.interval.0))),
                Origin::Merged => unique(&mut taken, format!("{src}~[{},{}]", t(s.interval.0), t(s.interval.1))),
                Origin::Split => loop {
                    split_counter[s.source.index()] += 1;
                    let n = split_counter[s.source.index()];
                    let l = format!("{src}#{n}[{},{}]", t(s.interval.0), t(s.interval.1));
                    if taken.insert(l.clone()) {
                        break l;
                    }
                },
            };
            labels.push(label);
            remap[i] = new_id as u32;
            lineage.push(s.source, s.interval, s.stamp);
        }

        let facts = self
            .facts
            .into_iter()
            .map(|mut f| {
                f.p = PredicateId(remap[f.p.index()]);
                f
            })
            .collect();
        let predicates = Vocab::from_labels(labels).expect("derived labels are unique");
        let g = TemporalGraph::from_parts_unchecked(
            Arc::clone(self.base.entities()),
            Arc::new(predicates),
            Arc::clone(self.base.times()),
            facts,
            self.splits,
        );
        (g, lineage)
    }
}

fn unique(taken: &mut HashSet<String>, label: String) -> String {
    if taken.insert(label.clone()) {
        return label;
    }
    (2..)
        .map(|k| format!("{label}'{k}"))
        .find(|l| taken.insert(l.clone()))
        .expect("unbounded search")
}
