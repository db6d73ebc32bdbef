//! Pipeline stages. Each returns a stage-tagged [`Failure`] on error.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use tkge_core::embed::{self, EmbeddingModel, TrainOutcome};
use tkge_core::eval::{self, MetricReport, RankRecord};
use tkge_core::leakage::{self, DuplicateAudit, FilterMode};
use tkge_core::tkg::{self, LoadReport, Split, StaticSplits, StaticTriple, TemporalGraph, Vocab};
use tkge_core::transform::{self, Method, SplitCriterion, Transformed};
use tkge_core::{EntityId, PredicateId};

use crate::artifacts::Artifacts;
use crate::config::{EvalSplit, PipelineConfig};
use crate::error::{Failure, Result};

pub const CHECKPOINT: &str = "model.ckpt";
pub const ENTITY_VOCAB: &str = "entities.tsv";
pub const PREDICATE_VOCAB: &str = "predicates.tsv";

pub fn load(cfg: &PipelineConfig) -> Result<(TemporalGraph, LoadReport)> {
    cfg.check_data()?;
    let started = Instant::now();
    let out = tkg::load_dataset(&cfg.data.path, &cfg.load_options()?).map_err(|e| Failure::data("load", e))?;
    log::info!("loaded {} facts from {} in {:.2?}", out.0.len(), cfg.data.path.display(), started.elapsed());
    Ok(out)
}

pub fn transform(cfg: &PipelineConfig, g: &TemporalGraph) -> Result<Transformed> {
    let t = &cfg.transform;
    let started = Instant::now();
    let out = match t.method {
        Method::Vanilla => Ok(transform::vanilla(g)),
        Method::Timestamp => Ok(transform::timestamp(g)),
        Method::SplitTime => transform::split_parameterized(g, SplitCriterion::Time, t.grow),
        Method::SplitCount => transform::split_parameterized(g, SplitCriterion::Count, t.grow),
        Method::SplitCpd => transform::split_cpd(g, t.score, t.scope.into(), &t.cpd()),
        Method::Merge => transform::merge(g, t.shrink),
        Method::RandomSplit => transform::random_split(g, t.grow, t.seed),
    }
    .map_err(Failure::from_transform)?;
    log::info!(
        "{}: {} -> {} predicates in {:.2?}",
        t.method,
        out.report.predicates_before,
        out.report.predicates_after,
        started.elapsed()
    );
    Ok(out)
}

/// One row of dataset statistics.
pub fn write_stats<W: Write>(name: &str, g: &TemporalGraph, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "{:<16}{:>10}{:>12}{:>12}{:>10}{:>10}{:>10}",
        "dataset", "entities", "predicates", "timestamps", "train", "valid", "test"
    )?;
    writeln!(
        w,
        "{:<16}{:>10}{:>12}{:>12}{:>10}{:>10}{:>10}",
        name,
        g.num_entities(),
        g.num_predicates(),
        g.num_timestamps(),
        g.split_len(Split::Train),
        g.split_len(Split::Valid),
        g.split_len(Split::Test)
    )
}

pub fn write_load_report<W: Write>(r: &LoadReport, mut w: W) -> io::Result<()> {
    writeln!(w, "lines read          {}", r.lines)?;
    writeln!(w, "facts kept          {}", r.kept)?;
    writeln!(w, "begin filled        {}", r.filled_begin)?;
    writeln!(w, "end filled          {}", r.filled_end)?;
    writeln!(w, "unparseable dropped {}", r.dropped_unparseable)?;
    writeln!(w, "reversed dropped    {}", r.dropped_reversed)?;
    writeln!(w, "unscoped dropped    {}", r.dropped_unscoped)
}

pub fn filter(splits: &StaticSplits, mode: FilterMode) -> Result<StaticSplits> {
    leakage::apply_filter(splits, mode).map_err(|e| Failure::data("filter", e))
}

/// `s<TAB>p<TAB>o` per triple, labelled through `g`.
pub fn write_triples<W: Write>(g: &TemporalGraph, triples: &[StaticTriple], mut w: W) -> io::Result<()> {
    for t in triples {
        writeln!(w, "{}\t{}\t{}", g.entity_label(t.s), g.predicate_label(t.p), g.entity_label(t.o))?;
    }
    Ok(())
}

pub fn train(cfg: &PipelineConfig, g: &TemporalGraph, splits: &StaticSplits) -> Result<TrainOutcome> {
    cfg.check_train()?;
    let started = Instant::now();
    let out = embed::train(&splits.train, g.num_entities(), g.num_predicates(), &cfg.train.to_core())
        .map_err(|e| Failure::from_embed("train", e))?;
    log::info!(
        "trained {} epochs on {} triples in {:.2?}, final loss {:.4}",
        cfg.train.epochs,
        splits.train.len(),
        started.elapsed(),
        out.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(out)
}

/// Filtered ranks over the configured split; the filter set is every
/// triple of `splits`.
pub fn evaluate(cfg: &PipelineConfig, model: &EmbeddingModel, splits: &StaticSplits) -> Result<(Vec<RankRecord>, MetricReport)> {
    let queries = match cfg.eval.split {
        EvalSplit::Test => &splits.test,
        EvalSplit::Valid => &splits.valid,
    };
    for t in queries {
        model.check(*t).map_err(|e| Failure::data("eval", e))?;
    }
    let known: HashSet<StaticTriple> = splits.all().copied().collect();
    let started = Instant::now();
    let records = eval::rank_queries(model, queries, &known, cfg.eval.tie);
    let report = eval::metrics(&records).map_err(|e| Failure::data("eval", e))?;
    log::info!("ranked {} queries in {:.2?}", records.len(), started.elapsed());
    Ok((records, report))
}

pub fn write_loss_curve<W: Write>(losses: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "epoch,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    Ok(())
}

/// Checkpoint plus the vocabularies that give its rows meaning.
pub fn save_model(art: &mut Artifacts, g: &TemporalGraph, model: &EmbeddingModel) -> Result<()> {
    let io = |e| Failure::io("train", e);
    art.write(CHECKPOINT, |w| model.write_checkpoint(w)).map_err(io)?;
    art.write(ENTITY_VOCAB, |w| g.entities().write_tsv(w)).map_err(io)?;
    art.write(PREDICATE_VOCAB, |w| g.predicates().write_tsv(w)).map_err(io)?;
    Ok(())
}

pub struct SavedModel {
    pub model: EmbeddingModel,
    pub entities: Vocab,
    pub predicates: Vocab,
}

/// Reads a checkpoint and the vocabulary files beside it.
pub fn load_model(checkpoint: &Path) -> Result<SavedModel> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let open = |p: &Path| fs::File::open(p).map(BufReader::new).map_err(|e| Failure::data("model", format!("{}: {e}", p.display())));
    let model = EmbeddingModel::read_checkpoint(open(checkpoint)?).map_err(|e| Failure::data("model", e))?;
    let vocab = |name: &str| -> Result<Vocab> {
        let p = dir.join(name);
        Vocab::read_tsv(open(&p)?).map_err(|e| Failure::data("model", format!("{}: {e}", p.display())))
    };
    let entities = vocab(ENTITY_VOCAB)?;
    let predicates = vocab(PREDICATE_VOCAB)?;
    if entities.len() != model.num_entities() || predicates.len() != model.num_predicates() {
        return Err(Failure::data("model", "vocabulary sizes do not match the checkpoint"));
    }
    Ok(SavedModel { model, entities, predicates })
}

/// Re-expresses `splits` (ids of `g`) in the ids of a saved model.
pub fn remap(g: &TemporalGraph, splits: &StaticSplits, saved: &SavedModel) -> Result<StaticSplits> {
    let ent = |e: EntityId| {
        let l = g.entity_label(e);
        saved.entities.get(l).map(EntityId).ok_or_else(|| Failure::data("eval", format!("entity `{l}` unknown to the model")))
    };
    let pred = |p: PredicateId| {
        let l = g.predicate_label(p);
        saved.predicates.get(l).map(PredicateId).ok_or_else(|| Failure::data("eval", format!("predicate `{l}` unknown to the model")))
    };
    let map = |ts: &[StaticTriple]| ts.iter().map(|t| Ok(StaticTriple::new(ent(t.s)?, pred(t.p)?, ent(t.o)?))).collect::<Result<Vec<_>>>();
    Ok(StaticSplits { train: map(&splits.train)?, valid: map(&splits.valid)?, test: map(&splits.test)? })
}

/// The graph as a valid-time dataset directory `dir` under the artifacts.
pub fn write_graph(art: &mut Artifacts, dir: &str, g: &TemporalGraph) -> io::Result<()> {
    for (split, name) in tkg::SPLIT_FILES {
        art.write(&format!("{dir}/{name}"), |w| {
            for (f, s) in g.iter() {
                if s == split {
                    let (b, e) = (g.time_label(f.b), g.time_label(f.e));
                    writeln!(w, "{}\t{}\t{}\t{b}\t{e}", g.entity_label(f.s), g.predicate_label(f.p), g.entity_label(f.o))?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn write_audit(art: &mut Artifacts, name: &str, audit: &DuplicateAudit) -> Result<()> {
    let io = |e| Failure::io("audit", e);
    art.write(&format!("{name}.txt"), |w| audit.write_text(w)).map_err(io)?;
    art.write(&format!("{name}.csv"), |w| audit.write_csv(w)).map_err(io)?;
    Ok(())
}

/// load, transform, strip, audit, filter, train, evaluate. Writes every
/// artifact under `art` and returns the metrics.
pub fn run_pipeline(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<MetricReport> {
    cfg.validate()?;
    let (g, load_report) = load(cfg)?;
    let io = |stage| move |e| Failure::io(stage, e);
    art.write("load_report.txt", |w| write_load_report(&load_report, w)).map_err(io("load"))?;

    let out = transform(cfg, &g)?;
    let tg = &out.graph;
    write_graph(art, "dataset", tg).map_err(io("transform"))?;
    art.write("lineage.tsv", |w| out.lineage.write_tsv(tg, w)).map_err(io("transform"))?;
    art.write("transform_report.txt", |w| out.report.write_text(w)).map_err(io("transform"))?;

    let stripped = tkg::strip_temporal(tg);
    write_audit(art, "audit", &leakage::audit(&stripped))?;
    let filtered = filter(&stripped, cfg.filter.mode)?;
    write_audit(art, "audit_filtered", &leakage::audit(&filtered))?;

    let trained = train(cfg, tg, &filtered)?;
    save_model(art, tg, &trained.model)?;
    art.write("loss.csv", |w| write_loss_curve(&trained.epoch_loss, w)).map_err(io("train"))?;

    let (records, report) = evaluate(cfg, &trained.model, &filtered)?;
    art.write("metrics.txt", |w| report.write_table(w)).map_err(io("eval"))?;
    art.write("metrics.csv", |w| report.write_csv(w)).map_err(io("eval"))?;
    if cfg.eval.dump_ranks {
        art.write("ranks.tsv", |w| eval::write_ranks(&records, w)).map_err(io("eval"))?;
    }
    Ok(report)
}
