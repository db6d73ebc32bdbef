//! Neighbourhood proximity measures and per-predicate signature series.
//!
//! A signature series tracks, for one predicate, how close the endpoints of
//! each of its entity pairs are at every timestamp. The graph is read as
//! undirected and only the facts valid at a timestamp contribute to that
//! timestamp's neighbourhoods.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::tkg::{EntityId, PredicateId, Quintuple, TemporalGraph, TimeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProximityError {
    #[error("predicate subgraph has no facts")]
    NoFacts,
    #[error("expected facts of a single predicate, found {0} and {1}")]
    MixedPredicates(PredicateId, PredicateId),
    #[error("neighbourhoods cover {found} timestamps but the graph has {expected}")]
    TimeMismatch { expected: usize, found: usize },
}

/// Undirected adjacency: `o ∈ Γ(s)` iff `s ∈ Γ(o)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeighborIndex {
    adj: HashMap<EntityId, Vec<EntityId>>,
}

impl NeighborIndex {
    pub fn from_edges(edges: impl IntoIterator<Item = (EntityId, EntityId)>) -> Self {
        let mut adj: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
        for (s, o) in edges {
            adj.entry(s).or_default().push(o);
            adj.entry(o).or_default().push(s);
        }
        for n in adj.values_mut() {
            n.sort_unstable();
            n.dedup();
        }
        Self { adj }
    }

    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a Quintuple>) -> Self {
        Self::from_edges(facts.into_iter().map(|f| (f.s, f.o)))
    }

    /// Sorted, deduplicated neighbours of `e`.
    pub fn neighbors(&self, e: EntityId) -> &[EntityId] {
        self.adj.get(&e).map_or(&[], Vec::as_slice)
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.neighbors(e).len()
    }

    fn common<'a>(&'a self, s: EntityId, o: EntityId) -> impl Iterator<Item = EntityId> + 'a {
        let (mut a, mut b) = (self.neighbors(s).iter().peekable(), self.neighbors(o).iter().peekable());
        std::iter::from_fn(move || loop {
            let (&x, &y) = (a.peek()?, b.peek()?);
            match x.cmp(y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    a.next();
                    b.next();
                    return Some(*x);
                }
            }
        })
    }
}

/// `|Γ(s) ∩ Γ(o)| / |Γ(s) ∪ Γ(o)|`, or 0 when both neighbourhoods are empty.
pub fn jaccard(s: EntityId, o: EntityId, idx: &NeighborIndex) -> f64 {
    let inter = idx.common(s, o).count();
    let union = idx.degree(s) + idx.degree(o) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `Σ 1 / ln |Γ(z)|` over common neighbours `z`. Neighbours of degree one or
/// less would divide by `ln 1 = 0` and are skipped.
pub fn adamic_adar(s: EntityId, o: EntityId, idx: &NeighborIndex) -> f64 {
    idx.common(s, o)
        .map(|z| idx.degree(z))
        .filter(|&d| d > 1)
        .map(|d| 1.0 / (d as f64).ln())
        .sum()
}

/// `|Γ(s)| · |Γ(o)|`.
pub fn pref_attachment(s: EntityId, o: EntityId, idx: &NeighborIndex) -> f64 {
    (idx.degree(s) * idx.degree(o)) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Measure {
    Jaccard,
    AdamicAdar,
    PrefAttachment,
}

impl Measure {
    pub fn score(self, s: EntityId, o: EntityId, idx: &NeighborIndex) -> f64 {
        match self {
            Measure::Jaccard => jaccard(s, o, idx),
            Measure::AdamicAdar => adamic_adar(s, o, idx),
            Measure::PrefAttachment => pref_attachment(s, o, idx),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Jaccard => "jaccard",
            Measure::AdamicAdar => "adar",
            Measure::PrefAttachment => "pref",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard" => Ok(Measure::Jaccard),
            "adar" | "adamic_adar" | "adamic-adar" => Ok(Measure::AdamicAdar),
            "pref" | "pref_attachment" | "preferential_attachment" => Ok(Measure::PrefAttachment),
            other => Err(format!("unknown proximity measure `{other}` (expected jaccard, adar or pref)")),
        }
    }
}

/// Which facts form the neighbourhoods used to score a predicate's pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NeighborhoodScope {
    /// Only the predicate's own facts valid at the timestamp.
    #[default]
    Predicate,
    /// Every fact of the graph valid at the timestamp.
    Graph,
}

/// One neighbour index per timestamp over a whole graph.
#[derive(Clone, Debug)]
pub struct SliceNeighborhoods {
    slices: Vec<NeighborIndex>,
}

impl SliceNeighborhoods {
    pub fn build(g: &TemporalGraph) -> Self {
        let by_time = facts_by_time(g.facts(), g.num_timestamps());
        let slices = by_time
            .iter()
            .map(|ids| NeighborIndex::from_facts(ids.iter().map(|&i| &g.facts()[i])))
            .collect();
        Self { slices }
    }

    pub fn at(&self, t: TimeId) -> &NeighborIndex {
        &self.slices[t.index()]
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

/// Indices of the facts valid at each timestamp.
fn facts_by_time(facts: &[Quintuple], n_times: usize) -> Vec<Vec<usize>> {
    let mut by_time = vec![Vec::new(); n_times];
    for (i, f) in facts.iter().enumerate() {
        for t in f.b.index()..=f.e.index() {
            by_time[t].push(i);
        }
    }
    by_time
}

/// Proximity scores of a predicate's entity pairs over time.
///
/// Rows are timestamps, columns are canonical pairs (smaller id first). A
/// pair keeps the same column in every row; a cell is 0 when the pair is not
/// connected by the predicate at that timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureSeries {
    predicate: PredicateId,
    pairs: Vec<(EntityId, EntityId)>,
    pair_index: HashMap<(EntityId, EntityId), usize>,
    rows: usize,
    values: Vec<f64>,
}

fn canonical(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SignatureSeries {
    pub fn predicate(&self) -> PredicateId {
        self.predicate
    }

    pub fn pairs(&self) -> &[(EntityId, EntityId)] {
        &self.pairs
    }

    pub fn column(&self, s: EntityId, o: EntityId) -> Option<usize> {
        self.pair_index.get(&canonical(s, o)).copied()
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.pairs.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.num_cols();
        &self.values[t * c..(t + 1) * c]
    }

    pub fn get(&self, t: usize, col: usize) -> f64 {
        self.values[t * self.num_cols() + col]
    }

    /// Row-major `rows × cols` matrix.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Debug dump: header of pair labels, one row per timestamp.
    pub fn write_csv<W: Write>(&self, g: &TemporalGraph, mut w: W) -> io::Result<()> {
        write!(w, "time")?;
        for &(a, b) in &self.pairs {
            write!(w, ",{}", csv_field(&format!("{}|{}", g.entity_label(a), g.entity_label(b))))?;
        }
        writeln!(w)?;
        for t in 0..self.rows {
            write!(w, "{}", csv_field(&g.time_label(TimeId::from_index(t))))?;
            for v in self.row(t) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Signature series of the single predicate in `g_r`, with neighbourhoods
/// built from `g_r`'s own slices.
pub fn calc_signatures(g_r: &TemporalGraph, measure: Measure) -> Result<SignatureSeries, ProximityError> {
    calc_signatures_with(g_r, None, measure)
}

/// Like [`calc_signatures`], but scores against precomputed neighbourhoods
/// (for example of the whole graph) when given.
pub fn calc_signatures_with(
    g_r: &TemporalGraph,
    neighborhoods: Option<&SliceNeighborhoods>,
    measure: Measure,
) -> Result<SignatureSeries, ProximityError> {
    let facts = g_r.facts();
    let first = facts.first().ok_or(ProximityError::NoFacts)?;
    if let Some(other) = facts.iter().find(|f| f.p != first.p) {
        return Err(ProximityError::MixedPredicates(first.p, other.p));
    }
    let rows = g_r.num_timestamps();
    if let Some(n) = neighborhoods {
        if n.len() != rows {
            return Err(ProximityError::TimeMismatch { expected: rows, found: n.len() });
        }
    }

    let mut pairs = Vec::new();
    let mut pair_index = HashMap::new();
    for f in facts {
        let key = canonical(f.s, f.o);
        pair_index.entry(key).or_insert_with(|| {
            pairs.push(key);
            pairs.len() - 1
        });
    }

    let cols = pairs.len();
    let mut values = vec![0.0; rows * cols];
    for (t, ids) in facts_by_time(facts, rows).into_iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let local;
        let idx = match neighborhoods {
            Some(n) => n.at(TimeId::from_index(t)),
            None => {
                local = NeighborIndex::from_facts(ids.iter().map(|&i| &facts[i]));
                &local
            }
        };
        for i in ids {
            let f = &facts[i];
            let col = pair_index[&canonical(f.s, f.o)];
            values[t * cols + col] = measure.score(f.s, f.o, idx);
        }
    }

    Ok(SignatureSeries {
        predicate: first.p,
        pairs,
        pair_index,
        rows,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tkg::{GraphBuilder, Split, TimeAxis};
    use proptest::prelude::*;

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }

    fn star(edges: &[(u32, u32)]) -> NeighborIndex {
        NeighborIndex::from_edges(edges.iter().map(|&(a, b)| (e(a), e(b))))
    }

    #[test]
    fn jaccard_examples() {
        // Γ(0) = {10, 11}, Γ(1) = {11, 12}
        let idx = star(&[(0, 10), (0, 11), (1, 11), (1, 12)]);
        assert!((jaccard(e(0), e(1), &idx) - 1.0 / 3.0).abs() < 1e-12);
        let same = star(&[(0, 10), (1, 10)]);
        assert_eq!(jaccard(e(0), e(1), &same), 1.0);
        let disjoint = star(&[(0, 10), (1, 11)]);
        assert_eq!(jaccard(e(0), e(1), &disjoint), 0.0);
        assert_eq!(jaccard(e(5), e(6), &disjoint), 0.0);
    }

    #[test]
    fn adamic_adar_examples() {
        // common neighbour 10 with degree 4
        let idx = star(&[(0, 10), (1, 10), (2, 10), (3, 10)]);
        assert!((adamic_adar(e(0), e(1), &idx) - 0.721_347_520_444_481_7).abs() < 1e-12);
        assert_eq!(adamic_adar(e(0), e(5), &idx), 0.0);
        // common neighbours 10 (degree 4) and 20 (degree 8)
        let mut edges = vec![(0, 10), (1, 10), (2, 10), (3, 10)];
        edges.extend((0..8).map(|i| (i, 20)));
        let idx = star(&edges);
        let want = 1.0 / 4f64.ln() + 1.0 / 8f64.ln();
        assert!((adamic_adar(e(0), e(1), &idx) - want).abs() < 1e-12);
    }

    #[test]
    fn pref_attachment_examples() {
        let idx = star(&[(0, 10), (0, 11), (0, 12), (1, 20), (1, 21), (1, 22), (1, 23)]);
        assert_eq!(pref_attachment(e(0), e(1), &idx), 12.0);
        assert_eq!(pref_attachment(e(1), e(0), &idx), 12.0);
        assert_eq!(pref_attachment(e(0), e(99), &idx), 0.0);
    }

    fn builder(n_times: usize) -> GraphBuilder {
        GraphBuilder::new(TimeAxis::indices(n_times))
    }

    #[test]
    fn single_edge_signature() {
        let mut b = builder(5);
        b.add("a", "r", "b", 1, 3, Split::Train);
        let g = b.build().unwrap();
        let sig = calc_signatures(&g, Measure::PrefAttachment).unwrap();
        assert_eq!((sig.num_rows(), sig.num_cols()), (5, 1));
        let col: Vec<f64> = (0..5).map(|t| sig.get(t, 0)).collect();
        assert_eq!(col, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn shared_subject_doubles_degree() {
        let mut b = builder(1);
        b.add("a", "r", "b", 0, 0, Split::Train).add("a", "r", "c", 0, 0, Split::Train);
        let g = b.build().unwrap();
        let sig = calc_signatures(&g, Measure::PrefAttachment).unwrap();
        assert_eq!(sig.row(0), &[2.0, 2.0]);
    }

    #[test]
    fn four_fact_toy_matches_hand_built_neighbourhoods() {
        // t0: a-b, b-c   t1: a-b, c-d   t2: c-d, a-c
        let mut b = builder(3);
        b.add("a", "r", "b", 0, 1, Split::Train)
            .add("b", "r", "c", 0, 0, Split::Train)
            .add("c", "r", "d", 1, 2, Split::Valid)
            .add("a", "r", "c", 2, 2, Split::Test);
        let g = b.build().unwrap();
        let id = |l: &str| EntityId(g.entities().get(l).unwrap());
        let (a, bb, c, d) = (id("a"), id("b"), id("c"), id("d"));

        // Oracle: build neighbourhood sets per slice by hand.
        let slices: [&[(EntityId, EntityId)]; 3] = [&[(a, bb), (bb, c)], &[(a, bb), (c, d)], &[(c, d), (a, c)]];
        let sig = calc_signatures(&g, Measure::Jaccard).unwrap();
        assert_eq!(sig.num_cols(), 4);
        for (t, edges) in slices.iter().enumerate() {
            let mut nb: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
            for &(x, y) in edges.iter() {
                nb.entry(x).or_default().push(y);
                nb.entry(y).or_default().push(x);
            }
            let set = |x| nb.get(&x).cloned().unwrap_or_default();
            for &(x, y) in sig.pairs() {
                let col = sig.column(x, y).unwrap();
                let present = edges.iter().any(|&(p, q)| canonical(p, q) == (x, y));
                let want = if present {
                    let (sx, sy) = (set(x), set(y));
                    let inter = sx.iter().filter(|z| sy.contains(z)).count();
                    let union = sx.len() + sy.len() - inter;
                    inter as f64 / union as f64
                } else {
                    0.0
                };
                assert_eq!(sig.get(t, col), want, "t={t} pair=({x},{y})");
            }
        }
    }

    #[test]
    fn reversed_pair_shares_a_column() {
        let mut b = builder(2);
        b.add("a", "r", "b", 0, 0, Split::Train).add("b", "r", "a", 1, 1, Split::Train);
        let g = b.build().unwrap();
        let sig = calc_signatures(&g, Measure::PrefAttachment).unwrap();
        assert_eq!(sig.num_cols(), 1);
        assert_eq!(sig.row(0), &[1.0]);
        assert_eq!(sig.row(1), &[1.0]);
    }

    #[test]
    fn errors() {
        let g = builder(1).build().unwrap();
        assert_eq!(calc_signatures(&g, Measure::Jaccard).unwrap_err(), ProximityError::NoFacts);
        let mut b = builder(1);
        b.add("a", "r", "b", 0, 0, Split::Train).add("a", "q", "b", 0, 0, Split::Train);
        assert!(matches!(
            calc_signatures(&b.build().unwrap(), Measure::Jaccard),
            Err(ProximityError::MixedPredicates(..))
        ));
    }

    #[test]
    fn graph_scope_uses_other_predicates() {
        let mut b = builder(1);
        b.add("a", "r", "b", 0, 0, Split::Train).add("a", "q", "c", 0, 0, Split::Train);
        let g = b.build().unwrap();
        let hood = SliceNeighborhoods::build(&g);
        let g_r = g.restrict_predicate(PredicateId(0)).unwrap();
        let local = calc_signatures(&g_r, Measure::PrefAttachment).unwrap();
        let global = calc_signatures_with(&g_r, Some(&hood), Measure::PrefAttachment).unwrap();
        assert_eq!(local.row(0), &[1.0]);
        assert_eq!(global.row(0), &[2.0]);
    }

    fn random_edges() -> impl Strategy<Value = Vec<(u32, u32)>> {
        prop::collection::vec((0u32..12, 0u32..12), 0..40)
    }

    proptest! {
        #[test]
        fn measures_are_symmetric_and_bounded(edges in random_edges(), s in 0u32..12, o in 0u32..12) {
            let idx = star(&edges);
            for m in [Measure::Jaccard, Measure::AdamicAdar, Measure::PrefAttachment] {
                let a = m.score(e(s), e(o), &idx);
                let b = m.score(e(o), e(s), &idx);
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!(a >= 0.0);
            }
            let j = jaccard(e(s), e(o), &idx);
            prop_assert!((0.0..=1.0).contains(&j));
            let pa = pref_attachment(e(s), e(o), &idx);
            prop_assert_eq!(pa.fract(), 0.0);
        }

        #[test]
        fn neighbourhoods_are_symmetric(edges in random_edges()) {
            let idx = star(&edges);
            for i in 0..12 {
                for &j in idx.neighbors(e(i)) {
                    prop_assert!(idx.neighbors(j).contains(&e(i)));
                }
            }
        }

        #[test]
        fn row_depends_only_on_its_slice(
            facts in prop::collection::vec((0u32..6, 0u32..6, 0u32..4, 0u32..4), 1..20),
            t in 0usize..4,
        ) {
            let build = |fs: &[(u32, u32, u32, u32)]| {
                let mut b = GraphBuilder::new(TimeAxis::indices(4))
                    .with_entities(["e0", "e1", "e2", "e3", "e4", "e5"]);
                for &(s, o, x, y) in fs {
                    b.add(&format!("e{s}"), "r", &format!("e{o}"), x.min(y), x.max(y), Split::Train);
                }
                b.build().unwrap()
            };
            let g = build(&facts);
            let sig = calc_signatures(&g, Measure::AdamicAdar).unwrap();
            prop_assert_eq!(sig.num_rows(), 4);
            // Drop facts not valid at t (when something remains at t): row t is unchanged
            // wherever its pair still exists.
            let kept: Vec<_> = facts.iter().copied()
                .filter(|&(_, _, x, y)| x.min(y) as usize <= t && t <= x.max(y) as usize)
                .collect();
            if kept.is_empty() {
                prop_assert!(sig.row(t).iter().all(|&v| v == 0.0));
            } else {
                let sig2 = calc_signatures(&build(&kept), Measure::AdamicAdar).unwrap();
                for &(a, b) in sig.pairs() {
                    let v1 = sig.get(t, sig.column(a, b).unwrap());
                    let v2 = sig2.column(a, b).map_or(0.0, |c| sig2.get(t, c));
                    prop_assert_eq!(v1, v2);
                }
            }
        }
    }
}
