//! Predicate-level transformations that fold temporal scope into predicates.
//!
//! Every operation returns the transformed graph together with a
//! [`PredicateLineage`] mapping each derived predicate back to its source
//! predicate and validity interval.

mod lineage;
mod work;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cpd::{self, CpdConfig, CpdError};
use crate::proximity::{self, Measure, NeighborhoodScope, ProximityError, SliceNeighborhoods};
use crate::tkg::{PredicateId, TemporalGraph, TimeId, Vocab};

pub use lineage::LineageError;
use work::{Origin, Work};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("predicate {0} does not exist")]
    UnknownPredicate(PredicateId),
    #[error("split time {t} lies outside the span [{begin}, {end}] of predicate {predicate}")]
    OutsideSpan { predicate: PredicateId, t: TimeId, begin: TimeId, end: TimeId },
    #[error("predicate {0} has no facts")]
    EmptyPredicate(PredicateId),
    #[error("lineage covers {lineage} predicates but the graph has {graph}")]
    LineageMismatch { lineage: usize, graph: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Cpd(#[from] CpdError),
    #[error(transparent)]
    Proximity(#[from] ProximityError),
}

/// Maps every derived predicate to its source predicate, validity interval
/// and (for timestamped predicates) the timestamp it stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct PredicateLineage {
    sources: Arc<Vocab>,
    source: Vec<PredicateId>,
    interval: Vec<(TimeId, TimeId)>,
    stamp: Vec<Option<TimeId>>,
}

impl PredicateLineage {
    /// Every predicate of `g` is its own source, valid over the whole axis.
    pub fn identity(g: &TemporalGraph) -> Self {
        let last = TimeId::from_index(g.num_timestamps().saturating_sub(1));
        let n = g.num_predicates();
        Self {
            sources: Arc::clone(g.predicates()),
            source: g.predicate_ids().collect(),
            interval: vec![(TimeId(0), last); n],
            stamp: vec![None; n],
        }
    }

    pub(crate) fn with_sources(sources: Arc<Vocab>) -> Self {
        Self { sources, source: Vec::new(), interval: Vec::new(), stamp: Vec::new() }
    }

    pub(crate) fn push(&mut self, source: PredicateId, interval: (TimeId, TimeId), stamp: Option<TimeId>) {
        self.source.push(source);
        self.interval.push(interval);
        self.stamp.push(stamp);
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Labels of the source predicates.
    pub fn sources(&self) -> &Arc<Vocab> {
        &self.sources
    }

    pub fn source(&self, p: PredicateId) -> PredicateId {
        self.source[p.index()]
    }

    pub fn source_label(&self, p: PredicateId) -> &str {
        self.sources.label(self.source(p).0)
    }

    pub fn interval(&self, p: PredicateId) -> (TimeId, TimeId) {
        self.interval[p.index()]
    }

    pub fn stamp(&self, p: PredicateId) -> Option<TimeId> {
        self.stamp[p.index()]
    }

    /// Inclusive intervals `[a, b]` and `[lo, hi]` share a timestamp.
    pub fn overlaps(&self, p: PredicateId, lo: TimeId, hi: TimeId) -> bool {
        let (a, b) = self.interval(p);
        a <= hi && lo <= b
    }

    fn check(&self, g: &TemporalGraph) -> Result<(), TransformError> {
        if self.len() != g.num_predicates() {
            return Err(TransformError::LineageMismatch { lineage: self.len(), graph: g.num_predicates() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Vanilla,
    Timestamp,
    SplitTime,
    SplitCount,
    SplitCpd,
    Merge,
    RandomSplit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "none",
            Method::Timestamp => "timestamp",
            Method::SplitTime => "split-time",
            Method::SplitCount => "split-count",
            Method::SplitCpd => "split-cpd",
            Method::Merge => "merge",
            Method::RandomSplit => "random-split",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.replace('_', "-").as_str() {
            "none" | "vanilla" => Method::Vanilla,
            "timestamp" => Method::Timestamp,
            "split-time" => Method::SplitTime,
            "split-count" => Method::SplitCount,
            "split-cpd" | "cpd" => Method::SplitCpd,
            "merge" => Method::Merge,
            "random-split" | "random" => Method::RandomSplit,
            other => return Err(format!("unknown transform method '{other}'")),
        })
    }
}

/// Timestamp choice for parameterized splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitCriterion {
    /// Midpoint of the predicate's active span.
    Time,
    /// Timestamp balancing facts ending before and beginning after it.
    Count,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitRecord {
    pub predicate: String,
    pub at: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformReport {
    pub method: Method,
    pub params: Vec<(String, String)>,
    pub predicates_before: usize,
    pub predicates_after: usize,
    pub facts_before: usize,
    pub facts_after: usize,
    pub split_points: Vec<SplitRecord>,
    pub merge_trace: Vec<String>,
    pub warnings: Vec<String>,
}

impl TransformReport {
    fn new(method: Method, g: &TemporalGraph) -> Self {
        Self {
            method,
            params: Vec::new(),
            predicates_before: g.num_predicates(),
            predicates_after: g.num_predicates(),
            facts_before: g.len(),
            facts_after: g.len(),
            split_points: Vec::new(),
            merge_trace: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_owned(), value.to_string()));
        self
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn finish(&mut self, g: &TemporalGraph) {
        self.predicates_after = g.num_predicates();
        self.facts_after = g.len();
    }

    /// `key = value` lines; list entries repeat their key.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "method = {}", self.method)?;
        for (k, v) in &self.params {
            writeln!(w, "param.{k} = {v}")?;
        }
        writeln!(w, "predicates_before = {}", self.predicates_before)?;
        writeln!(w, "predicates_after = {}", self.predicates_after)?;
        writeln!(w, "facts_before = {}", self.facts_before)?;
        writeln!(w, "facts_after = {}", self.facts_after)?;
        for s in &self.split_points {
            writeln!(w, "split = {}\t{}", s.predicate, s.at.join(","))?;
        }
        for m in &self.merge_trace {
            writeln!(w, "merge = {m}")?;
        }
        for m in &self.warnings {
            writeln!(w, "warning = {m}")?;
        }
        Ok(())
    }
}

/// Output of a transformation.
#[derive(Clone, Debug)]
pub struct Transformed {
    pub graph: TemporalGraph,
    pub lineage: PredicateLineage,
    pub report: TransformReport,
}

/// The graph unchanged, for the baseline that later strips time.
pub fn vanilla(g: &TemporalGraph) -> Transformed {
    Transformed {
        graph: g.clone(),
        lineage: PredicateLineage::identity(g),
        report: TransformReport::new(Method::Vanilla, g),
    }
}

/// One predicate per observed (predicate, timestamp) pair; every fact
/// becomes one single-timestamp fact per timestamp of its interval.
pub fn timestamp(g: &TemporalGraph) -> Transformed {
    let mut work = Work::empty(g, Arc::clone(g.predicates()));
    let mut slot_of: HashMap<(PredicateId, TimeId), usize> = HashMap::new();
    for (f, split) in g.iter() {
        for t in f.b.0..=f.e.0 {
            let t = TimeId(t);
            let slot = *slot_of
                .entry((f.p, t))
                .or_insert_with(|| work.add_slot(f.p, (t, t), Some(t), Origin::Stamp));
            let mut fact = f;
            fact.b = t;
            fact.e = t;
            work.add_fact(fact, split, slot);
        }
    }
    let (graph, lineage) = work.finish();
    let mut report = TransformReport::new(Method::Timestamp, g);
    report.finish(&graph);
    Transformed { graph, lineage, report }
}

/// Replaces `r` by two predicates partitioned at `t`.
///
/// Facts with `b <= t <= e` are cut into `[b, t]` and `[t, e]`; facts ending
/// by `t` go left, the rest go right.
pub fn split_once(
    g: &TemporalGraph,
    lineage: &PredicateLineage,
    r: PredicateId,
    t: TimeId,
) -> Result<(TemporalGraph, PredicateLineage), TransformError> {
    lineage.check(g)?;
    if r.index() >= g.num_predicates() {
        return Err(TransformError::UnknownPredicate(r));
    }
    let (begin, end) = g.predicate_span(r).ok_or(TransformError::EmptyPredicate(r))?;
    if t < begin || t > end {
        return Err(TransformError::OutsideSpan { predicate: r, t, begin, end });
    }
    let mut work = Work::from_graph(g, lineage);
    work.split(r.index(), t);
    Ok(work.finish())
}

fn check_factor(name: &str, value: f64) -> Result<(), TransformError> {
    if value.is_nan() || value <= 1.0 {
        return Err(TransformError::InvalidParameter(format!("{name} must be greater than 1, got {value}")));
    }
    Ok(())
}

/// Split timestamp for `slot` under `criterion`, or `None` when the
/// predicate cannot be split usefully.
fn choose_split(work: &Work, slot: usize, criterion: SplitCriterion) -> Option<TimeId> {
    let (first, last) = work.span(slot)?;
    match criterion {
        SplitCriterion::Time => (first < last).then(|| TimeId((first.0 + last.0) / 2)),
        SplitCriterion::Count => {
            let mut ends: Vec<u32> = work.fact_intervals(slot).map(|(_, e)| e.0).collect();
            let mut begins: Vec<u32> = work.fact_intervals(slot).map(|(b, _)| b.0).collect();
            ends.sort_unstable();
            begins.sort_unstable();
            count_balance_point(&ends, &begins, first.0, last.0).map(TimeId)
        }
    }
}

/// `argmin_t |#{e <= t} - #{b >= t}|` over `t` in `[first, last]` with both
/// sides nonempty; earliest `t` on ties. Inputs are sorted.
fn count_balance_point(ends: &[u32], begins: &[u32], first: u32, last: u32) -> Option<u32> {
    let mut best: Option<(usize, u32)> = None;
    for t in first..=last {
        let ending = ends.partition_point(|&e| e <= t);
        let beginning = begins.len() - begins.partition_point(|&b| b < t);
        if ending == 0 || beginning == 0 {
            continue;
        }
        let gap = ending.abs_diff(beginning);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, t));
        }
    }
    best.map(|(_, t)| t)
}

/// Repeatedly splits the most frequent predicate until the predicate count
/// reaches `grow` times the original.
///
/// Predicates with no usable split timestamp (a single-timestamp span, or
/// no balanced point for the count criterion) are skipped; ties on
/// frequency go to the lowest id.
pub fn split_parameterized(g: &TemporalGraph, criterion: SplitCriterion, grow: f64) -> Result<Transformed, TransformError> {
    check_factor("grow", grow)?;
    let method = match criterion {
        SplitCriterion::Time => Method::SplitTime,
        SplitCriterion::Count => Method::SplitCount,
    };
    let mut report = TransformReport::new(method, g).param("grow", grow);
    let lineage = PredicateLineage::identity(g);
    let mut work = Work::from_graph(g, &lineage);
    let target = grow * g.num_predicates() as f64;

    // (descending count, slot)
    let mut queue: BTreeSet<(std::cmp::Reverse<usize>, usize)> =
        (0..work.slots.len()).map(|i| (std::cmp::Reverse(work.slots[i].facts.len()), i)).collect();
    while (work.live() as f64) < target {
        let Some(entry) = queue.pop_first() else {
            report.warn(format!(
                "no splittable predicate left at {} predicates (target {target})",
                work.live()
            ));
            break;
        };
        let slot = entry.1;
        let Some(t) = choose_split(&work, slot, criterion) else {
            continue;
        };
        let label = work.slot_label(slot);
        let (left, right) = work.split(slot, t);
        report.split_points.push(SplitRecord { predicate: label, at: vec![g.time_label(t)] });
        for s in [left, right] {
            queue.insert((std::cmp::Reverse(work.slots[s].facts.len()), s));
        }
    }
    let (graph, lineage) = work.finish();
    report.finish(&graph);
    Ok(Transformed { graph, lineage, report })
}

/// Splits a uniformly chosen predicate at a uniformly chosen timestamp of
/// its span until the predicate count reaches `grow` times the original.
pub fn random_split(g: &TemporalGraph, grow: f64, seed: u64) -> Result<Transformed, TransformError> {
    const MAX_RESAMPLES: usize = 100;
    check_factor("grow", grow)?;
    let mut report = TransformReport::new(Method::RandomSplit, g).param("grow", grow).param("seed", seed);
    let lineage = PredicateLineage::identity(g);
    let mut work = Work::from_graph(g, &lineage);
    let target = grow * g.num_predicates() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live: Vec<usize> = (0..work.slots.len()).filter(|&i| !work.slots[i].facts.is_empty()).collect();
    let mut failures = 0;
    while (work.live() as f64) < target {
        if live.is_empty() || failures >= MAX_RESAMPLES {
            report.warn(format!(
                "stopped after {failures} draws without a splittable predicate at {} predicates (target {target})",
                work.live()
            ));
            break;
        }
        let pos = rng.gen_range(0..live.len());
        let slot = live[pos];
        let (first, last) = work.span(slot).expect("live slots have facts");
        if first == last {
            failures += 1;
            continue;
        }
        failures = 0;
        let t = TimeId(rng.gen_range(first.0..=last.0));
        let label = work.slot_label(slot);
        let (left, right) = work.split(slot, t);
        report.split_points.push(SplitRecord { predicate: label, at: vec![g.time_label(t)] });
        live[pos] = left;
        live.push(right);
    }
    let (graph, lineage) = work.finish();
    report.finish(&graph);
    Ok(Transformed { graph, lineage, report })
}

/// Change points per predicate of `g`, in predicate id order.
pub fn cpd_split_points(
    g: &TemporalGraph,
    measure: Measure,
    scope: NeighborhoodScope,
    cfg: &CpdConfig,
) -> Result<Vec<Vec<TimeId>>, TransformError> {
    cfg.validate()?;
    let shared = match scope {
        NeighborhoodScope::Graph => Some(SliceNeighborhoods::build(g)),
        NeighborhoodScope::Predicate => None,
    };
    let index = g.predicate_index();
    g.predicate_ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|r| {
            if index[r.index()].is_empty() {
                return Ok(Vec::new());
            }
            let g_r = g.restrict_predicate(r).expect("id from the graph");
            let series = proximity::calc_signatures_with(&g_r, shared.as_ref(), measure)?;
            let out = cpd::bottom_up(&cpd::normalize(&series), cfg)?;
            Ok(out.segmentation.change_points().iter().map(|&k| TimeId::from_index(k)).collect())
        })
        .collect()
}

/// Splits every predicate at the change points of its proximity signature.
///
/// A change point `k` marks the first timestamp of a new regime; it is
/// applied left to right, and only when it lies strictly after the start
/// and no later than the end of the remaining right-hand predicate's span.
pub fn split_cpd(
    g: &TemporalGraph,
    measure: Measure,
    scope: NeighborhoodScope,
    cfg: &CpdConfig,
) -> Result<Transformed, TransformError> {
    let points = cpd_split_points(g, measure, scope, cfg)?;
    let mut report = TransformReport::new(Method::SplitCpd, g)
        .param("score", measure)
        .param("epsilon", cfg.epsilon)
        .param("min_size", cfg.min_size)
        .param("jump", cfg.jump)
        .param("gamma", cfg.gamma.map_or("median".to_owned(), |v| v.to_string()))
        .param("scope", match scope {
            NeighborhoodScope::Predicate => "predicate",
            NeighborhoodScope::Graph => "graph",
        });
    let lineage = PredicateLineage::identity(g);
    let mut work = Work::from_graph(g, &lineage);
    for (r, ks) in points.iter().enumerate() {
        let mut current = r;
        let mut applied = Vec::new();
        for &k in ks {
            let Some((first, last)) = work.span(current) else { break };
            if first < k && k <= last {
                current = work.split(current, k).1;
                applied.push(g.time_label(k));
            }
        }
        if !applied.is_empty() {
            report.split_points.push(SplitRecord {
                predicate: g.predicate_label(PredicateId::from_index(r)).to_owned(),
                at: applied,
            });
        }
    }
    let (graph, lineage) = work.finish();
    report.finish(&graph);
    Ok(Transformed { graph, lineage, report })
}

/// Timestamps `g`, then repeatedly merges the least frequent pair of
/// temporally adjacent predicates of one source until at most
/// `|timestamped| / shrink` predicates remain. `shrink = inf` merges until
/// every source has a single predicate again.
///
/// Ties on pair frequency go to the earlier stamp, then the lower source.
pub fn merge(g: &TemporalGraph, shrink: f64) -> Result<Transformed, TransformError> {
    check_factor("shrink", shrink)?;
    let stamped = timestamp(g);
    let mut report = TransformReport::new(Method::Merge, g).param("shrink", shrink);
    let mut work = Work::from_graph(&stamped.graph, &stamped.lineage);
    let target = stamped.graph.num_predicates() as f64 / shrink;

    // Per-source chains of slots in interval order.
    let n = work.slots.len();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut next: Vec<Option<usize>> = vec![None; n];
    for w in (0..n).collect::<Vec<_>>().windows(2) {
        if work.slots[w[0]].source == work.slots[w[1]].source {
            next[w[0]] = Some(w[1]);
            prev[w[1]] = Some(w[0]);
        }
    }
    type Key = (usize, TimeId, PredicateId, usize, usize);
    let key = |work: &Work, a: usize, b: usize| -> Key {
        let s = &work.slots[a];
        (s.facts.len() + work.slots[b].facts.len(), s.interval.0, s.source, a, b)
    };
    let mut candidates: BTreeSet<Key> = (0..n)
        .filter_map(|a| next[a].map(|b| key(&work, a, b)))
        .collect();

    while work.live() as f64 > target {
        let Some((size, _, _, a, b)) = candidates.pop_first() else {
            report.warn(format!(
                "no merge candidates left at {} predicates (target {target})",
                work.live()
            ));
            break;
        };
        let (la, lb) = (work.slot_label(a), work.slot_label(b));
        let (before, after) = (prev[a], next[b]);
        if let Some(p) = before {
            candidates.remove(&key(&work, p, a));
        }
        if let Some(q) = after {
            candidates.remove(&key(&work, b, q));
        }
        let m = work.merge(a, b);
        prev.push(before);
        next.push(after);
        if let Some(p) = before {
            next[p] = Some(m);
            candidates.insert(key(&work, p, m));
        }
        if let Some(q) = after {
            prev[q] = Some(m);
            candidates.insert(key(&work, m, q));
        }
        report.merge_trace.push(format!("{la} + {lb} ({size} facts)"));
    }
    let (graph, lineage) = work.finish();
    report.params.push(("timestamped_predicates".into(), stamped.graph.num_predicates().to_string()));
    report.finish(&graph);
    Ok(Transformed { graph, lineage, report })
}
