//! Filtered link-prediction ranking, MRR and hits@k, and lineage-filtered
//! predicate prediction.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::embed::EmbeddingModel;
use crate::tkg::{EntityId, PredicateId, Quintuple, StaticTriple};
use crate::transform::PredicateLineage;

pub const HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no rank records to aggregate")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Subject,
    Object,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Subject => "subject",
            Side::Object => "object",
        }
    }
}

/// How candidates scoring exactly like the target affect its rank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum TieRule {
    /// Ties do not count against the target.
    #[default]
    Optimistic,
    /// Every tie ranks above the target.
    Pessimistic,
    /// Half of the ties rank above the target.
    Mean,
}

impl FromStr for TieRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimistic" => Ok(TieRule::Optimistic),
            "pessimistic" => Ok(TieRule::Pessimistic),
            "mean" => Ok(TieRule::Mean),
            _ => Err(format!("unknown tie rule '{s}' (expected optimistic, pessimistic or mean)")),
        }
    }
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::Optimistic => "optimistic",
            TieRule::Pessimistic => "pessimistic",
            TieRule::Mean => "mean",
        })
    }
}

/// Rank of a test triple when one side is replaced by every entity.
/// Fractional only under [`TieRule::Mean`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankRecord {
    pub triple: StaticTriple,
    pub side: Side,
    pub rank: f64,
}

fn corrupt(t: StaticTriple, side: Side, e: EntityId) -> StaticTriple {
    match side {
        Side::Subject => StaticTriple { s: e, ..t },
        Side::Object => StaticTriple { o: e, ..t },
    }
}

fn rank_one(m: &EmbeddingModel, t: StaticTriple, side: Side, known: &HashSet<StaticTriple>, tie: TieRule) -> f64 {
    let target = m.score_unchecked(t.s, t.p, t.o);
    let (mut better, mut equal) = (0usize, 0usize);
    for e in 0..m.num_entities() {
        let c = corrupt(t, side, EntityId::from_index(e));
        if c == t || known.contains(&c) {
            continue;
        }
        let score = m.score_unchecked(c.s, c.p, c.o);
        if score < target {
            better += 1;
        } else if score == target {
            equal += 1;
        }
    }
    1.0 + better as f64
        + match tie {
            TieRule::Optimistic => 0.0,
            TieRule::Pessimistic => equal as f64,
            TieRule::Mean => equal as f64 / 2.0,
        }
}

/// Subject- and object-side ranks for every test triple, in that order.
///
/// Candidates found in `known` are filtered out, except the test triple
/// itself. An empty `known` gives raw ranks. Test triples must be in range
/// for the model.
pub fn rank_queries(
    m: &EmbeddingModel,
    test: &[StaticTriple],
    known: &HashSet<StaticTriple>,
    tie: TieRule,
) -> Vec<RankRecord> {
    test.par_iter()
        .flat_map_iter(|&t| {
            [Side::Subject, Side::Object].map(|side| RankRecord { triple: t, side, rank: rank_one(m, t, side, known, tie) })
        })
        .collect()
}

pub fn write_ranks<W: Write>(records: &[RankRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "s\tp\to\tside\trank")?;
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", r.triple.s, r.triple.p, r.triple.o, r.side.name(), r.rank)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub mrr: f64,
    /// `(k, hits@k)` for each k in [`HITS_AT`].
    pub hits: Vec<(usize, f64)>,
    pub query_count: usize,
}

impl MetricReport {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{:<10}{:>10}", "metric", "value")?;
        writeln!(w, "{:<10}{:>10.4}", "MRR", self.mrr)?;
        for (k, v) in &self.hits {
            writeln!(w, "{:<10}{:>10.4}", format!("hits@{k}"), v)?;
        }
        writeln!(w, "{:<10}{:>10}", "queries", self.query_count)
    }

    /// `metric,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "metric,value")?;
        writeln!(w, "mrr,{}", self.mrr)?;
        for (k, v) in &self.hits {
            writeln!(w, "hits@{k},{v}")?;
        }
        writeln!(w, "queries,{}", self.query_count)
    }
}

pub fn metrics(records: &[RankRecord]) -> Result<MetricReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = records.len() as f64;
    let mrr = records.iter().map(|r| 1.0 / r.rank).sum::<f64>() / n;
    let hits = HITS_AT
        .iter()
        .map(|&k| (k, records.iter().filter(|r| r.rank <= k as f64).count() as f64 / n))
        .collect();
    Ok(MetricReport { mrr, hits, query_count: records.len() })
}

/// Source predicates most likely to link `query.s` and `query.o`.
///
/// Scores every derived predicate, keeps the `top` best, drops those whose
/// lineage interval misses `[query.b, query.e]`, then maps the rest to
/// their sources, keeping the first occurrence of each.
pub fn predict_predicates(
    m: &EmbeddingModel,
    lineage: &PredicateLineage,
    query: &Quintuple,
    top: usize,
) -> Vec<PredicateId> {
    let mut scored: Vec<(f64, PredicateId)> = (0..m.num_predicates().min(lineage.len()))
        .map(|p| {
            let p = PredicateId::from_index(p);
            (m.score_unchecked(query.s, p, query.o), p)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut seen = HashSet::new();
    scored
        .into_iter()
        .take(top)
        .filter(|&(_, p)| lineage.overlaps(p, query.b, query.e))
        .map(|(_, p)| lineage.source(p))
        .filter(|src| seen.insert(*src))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Norm;
    use crate::tkg::{GraphBuilder, Split, TimeAxis, TimeId};
    use crate::transform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(s: u32, p: u32, o: u32) -> StaticTriple {
        StaticTriple::new(EntityId(s), PredicateId(p), EntityId(o))
    }

    fn records(ranks: &[f64]) -> Vec<RankRecord> {
        ranks.iter().map(|&rank| RankRecord { triple: t(0, 0, 0), side: Side::Object, rank }).collect()
    }

    #[test]
    fn metric_examples() {
        let r = metrics(&records(&[1.0, 2.0, 4.0])).unwrap();
        assert!((r.mrr - 7.0 / 12.0).abs() < 1e-15);
        let r = metrics(&records(&[1.0, 5.0, 100.0])).unwrap();
        assert!((r.hits_at(10).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let r = metrics(&records(&[1.0, 1.0])).unwrap();
        assert_eq!((r.mrr, r.hits_at(1), r.hits_at(10)), (1.0, Some(1.0), Some(1.0)));
        assert_eq!(metrics(&[]), Err(EvalError::Empty));
    }

    /// 1-D model where entity i sits at position `pos[i]`, predicate at 0.
    fn line_model(pos: &[f64]) -> EmbeddingModel {
        EmbeddingModel::from_parts(1, Norm::L1, pos.to_vec(), vec![0.0]).unwrap()
    }

    #[test]
    fn hand_scored_three_entities() {
        // Object side for (0, 0, 1): scores |0 - pos[o]| = [0, 1, 0.5].
        let m = line_model(&[0.0, 1.0, 0.5]);
        let none = HashSet::new();
        let r = rank_queries(&m, &[t(0, 0, 1)], &none, TieRule::Optimistic);
        assert_eq!(r[0].side, Side::Subject);
        // Subject side: scores |pos[s] - 1| = [1, 0, 0.5]; target s=0 scores 1.
        assert_eq!(r[0].rank, 3.0);
        assert_eq!(r[1].rank, 3.0);
        // Filtering (0, 0, 2) and (0, 0, 0) lifts the object side to rank 1.
        let known: HashSet<_> = [t(0, 0, 2), t(0, 0, 0)].into();
        let r = rank_queries(&m, &[t(0, 0, 1)], &known, TieRule::Optimistic);
        assert_eq!(r[1].rank, 1.0);
    }

    #[test]
    fn tie_rules() {
        // Object side: entities 1, 2 and 3 all score 0, entity 0 scores 1.
        let m = EmbeddingModel::from_parts(1, Norm::L1, vec![0.0, 1.0, 1.0, 1.0], vec![1.0]).unwrap();
        let none = HashSet::new();
        let rank = |tie| rank_queries(&m, &[t(0, 0, 1)], &none, tie)[1].rank;
        assert_eq!(rank(TieRule::Optimistic), 1.0);
        assert_eq!(rank(TieRule::Pessimistic), 3.0);
        assert_eq!(rank(TieRule::Mean), 2.0);
    }

    #[test]
    fn ties_with_other_entities() {
        // Entities 0 and 1 coincide, so each side has exactly one tie.
        let m = line_model(&[0.0, 0.0, 5.0, 9.0]);
        let r = rank_queries(&m, &[t(0, 0, 1)], &HashSet::new(), TieRule::Pessimistic);
        assert_eq!(r[1].rank, 2.0);
        let m = line_model(&[0.0, 0.1, 5.0, 9.0]);
        let r = rank_queries(&m, &[t(0, 0, 1)], &HashSet::new(), TieRule::Pessimistic);
        assert_eq!(r[0].rank, 2.0);
        assert_eq!(r[1].rank, 2.0);
        let m = line_model(&[0.0, 0.0, 5.0, 9.0]);
        let r = rank_queries(&m, &[t(0, 0, 1)], &HashSet::new(), TieRule::Optimistic);
        assert_eq!((r[0].rank, r[1].rank), (1.0, 1.0));
    }

    /// Score everything, sort, drop filtered candidates, find the target.
    fn brute_rank(m: &EmbeddingModel, q: StaticTriple, side: Side, known: &HashSet<StaticTriple>, tie: TieRule) -> f64 {
        let target = m.score(q).unwrap();
        let mut scores: Vec<f64> = (0..m.num_entities() as u32)
            .map(|e| match side {
                Side::Subject => t(e, q.p.0, q.o.0),
                Side::Object => t(q.s.0, q.p.0, e),
            })
            .filter(|c| *c == q || !known.contains(c))
            .filter(|c| *c != q)
            .map(|c| m.score(c).unwrap())
            .collect();
        scores.sort_by(f64::total_cmp);
        let better = scores.iter().filter(|s| **s < target).count() as f64;
        let equal = scores.iter().filter(|s| **s == target).count() as f64;
        match tie {
            TieRule::Optimistic => 1.0 + better,
            TieRule::Pessimistic => 1.0 + better + equal,
            TieRule::Mean => 1.0 + better + equal / 2.0,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ranking_matches_brute_force(seed in any::<u64>(), n in 2usize..50, coarse in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Coarse integer coordinates make ties common.
            let value = |rng: &mut ChaCha8Rng| if coarse { rng.gen_range(0..3) as f64 } else { rng.gen_range(-1.0..1.0) };
            let ent = (0..n * 2).map(|_| value(&mut rng)).collect();
            let pred = (0..4).map(|_| value(&mut rng)).collect();
            let m = EmbeddingModel::from_parts(2, Norm::L1, ent, pred).unwrap();
            let rt = |rng: &mut ChaCha8Rng| t(rng.gen_range(0..n as u32), rng.gen_range(0..2), rng.gen_range(0..n as u32));
            let known: HashSet<_> = (0..n * 2).map(|_| rt(&mut rng)).collect();
            let test: Vec<_> = (0..5).map(|_| rt(&mut rng)).collect();
            for tie in [TieRule::Optimistic, TieRule::Pessimistic, TieRule::Mean] {
                let got = rank_queries(&m, &test, &known, tie);
                let raw = rank_queries(&m, &test, &HashSet::new(), tie);
                for (r, raw) in got.iter().zip(&raw) {
                    prop_assert_eq!(r.rank, brute_rank(&m, r.triple, r.side, &known, tie));
                    prop_assert!(r.rank <= raw.rank);
                    prop_assert!(r.rank >= 1.0 && r.rank <= n as f64);
                }
                let rep = metrics(&got).unwrap();
                prop_assert!(rep.hits_at(1) <= rep.hits_at(3) && rep.hits_at(3) <= rep.hits_at(10));
                let mut rev = got.clone();
                rev.reverse();
                let rep2 = metrics(&rev).unwrap();
                prop_assert!((rep.mrr - rep2.mrr).abs() < 1e-12);
                prop_assert_eq!(rep.hits, rep2.hits);
            }
        }
    }

    fn lineage_graph() -> (crate::tkg::TemporalGraph, PredicateLineage) {
        let mut b = GraphBuilder::new(TimeAxis::indices(10));
        b.add("a", "r", "b", 0, 9, Split::Train).add("a", "q", "b", 0, 9, Split::Train);
        let g = b.build().unwrap();
        let out = transform::split_parameterized(&g, transform::SplitCriterion::Time, 2.0).unwrap();
        (out.graph, out.lineage)
    }

    #[test]
    fn predicate_prediction_without_filtering_is_score_order() {
        let (g, lin) = lineage_graph();
        assert_eq!(g.num_predicates(), 4);
        // predicate vectors chosen so scores order q#2, r#1, q#1, r#2
        let preds: Vec<f64> = (0..4).map(|p| g.predicate_label(PredicateId(p))).map(|l| match l {
            "q#2[4,9]" => 0.0,
            "r#1[0,4]" => 0.1,
            "q#1[0,4]" => 0.2,
            _ => 0.3,
        }).collect();
        let m = EmbeddingModel::from_parts(1, Norm::L1, vec![0.0, 0.0], preds).unwrap();
        let q = Quintuple::new(EntityId(0), PredicateId(0), EntityId(1), TimeId(0), TimeId(9));
        let out: Vec<&str> = predict_predicates(&m, &lin, &q, 4).iter().map(|&p| lin.sources().label(p.0)).collect();
        assert_eq!(out, ["q", "r"]);

        // Query at t = 8 excludes the [0, 4] halves.
        let q = Quintuple::new(EntityId(0), PredicateId(0), EntityId(1), TimeId(8), TimeId(8));
        let out: Vec<&str> = predict_predicates(&m, &lin, &q, 2).iter().map(|&p| lin.sources().label(p.0)).collect();
        assert_eq!(out, ["q"]);
    }

    #[test]
    fn disjoint_interval_is_excluded() {
        let (_, lin) = lineage_graph();
        let first_half = (0..4).map(PredicateId).find(|&p| lin.interval(p) == (TimeId(0), TimeId(4))).unwrap();
        assert!(!lin.overlaps(first_half, TimeId(6), TimeId(6)));
        assert!(lin.overlaps(first_half, TimeId(4), TimeId(6)));
    }

    #[test]
    fn reports_render() {
        let r = metrics(&records(&[1.0, 2.0])).unwrap();
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "metric,value\nmrr,0.75\nhits@1,0.5\nhits@3,1\nhits@10,1\nqueries,2\n");
        let mut table = Vec::new();
        r.write_table(&mut table).unwrap();
        assert!(String::from_utf8(table).unwrap().contains("MRR           0.7500"));
    }
}
