use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tkge_core::cpd::{self, Signal};
use tkge_core::leakage;
use tkge_core::tkg::{self, Split};

use crate::artifacts::Artifacts;
use crate::config::{EvalSplit, Format, NegativeUnit, PipelineConfig, Scope};
use crate::error::{Failure, Result};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "tkge", version, about = "Temporal knowledge graph embedding experiments")]
pub struct Cli {
    /// TOML config; `TKGE_<SECTION>_<KEY>` variables override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run every parallel stage on one thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// year, date or index.
    #[arg(long)]
    pub time_kind: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct TransformArgs {
    /// none, timestamp, split-time, split-count, split-cpd, merge or random-split.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub grow: Option<f64>,
    #[arg(long)]
    pub shrink: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// jaccard, adar or pref.
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long, value_enum)]
    pub scope: Option<Scope>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long, value_enum)]
    pub negatives_per: Option<NegativeUnit>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// L1 or L2.
    #[arg(long)]
    pub norm: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entity, predicate, timestamp and split counts.
    LoadStats {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Rewrite a dataset with time-aware predicates.
    Transform {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        transform: TransformArgs,
    },
    /// Duplicate and train-overlap counts after stripping time.
    Audit {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Strip time, deduplicate and write the static splits.
    Filter {
        #[command(flatten)]
        data: DataArgs,
        /// none, inter, intra or both.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train an embedding on the stripped (and filtered) training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Filtered link prediction metrics for a trained checkpoint.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        /// optimistic, pessimistic or mean.
        #[arg(long)]
        tie: Option<String>,
        #[arg(long, value_enum)]
        split: Option<EvalSplit>,
        #[arg(long)]
        dump_ranks: bool,
    },
    /// Run change point detection on a CSV signal (one row per step).
    SegmentDebug {
        signal: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        min_size: Option<usize>,
        #[arg(long)]
        jump: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// The whole pipeline, once per sweep grid point.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        transform: TransformArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Write entity and predicate vectors as TSV.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn parse<T: std::str::FromStr<Err = String>>(stage: &'static str, v: &str) -> Result<T> {
    v.parse().map_err(|e| Failure::config(stage, e))
}

impl DataArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.data {
            cfg.data.path = d.clone();
        }
        if let Some(f) = self.format {
            cfg.data.format = f;
        }
        if let Some(k) = &self.time_kind {
            cfg.data.time_kind = Some(k.clone());
        }
    }
}

impl TransformArgs {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        let t = &mut cfg.transform;
        if let Some(m) = &self.method {
            t.method = parse("transform", m)?;
        }
        if let Some(s) = &self.score {
            t.score = parse("transform", s)?;
        }
        t.grow = self.grow.unwrap_or(t.grow);
        t.shrink = self.shrink.unwrap_or(t.shrink);
        t.epsilon = self.epsilon.unwrap_or(t.epsilon);
        t.scope = self.scope.unwrap_or(t.scope);
        Ok(())
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.dim = self.dim.unwrap_or(t.dim);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.negatives = self.negatives.unwrap_or(t.negatives);
        t.negatives_per = self.negatives_per.unwrap_or(t.negatives_per);
        t.margin = self.margin.unwrap_or(t.margin);
        t.temperature = self.temperature.unwrap_or(t.temperature);
        if let Some(n) = &self.norm {
            t.norm = parse("train", n)?;
        }
        Ok(())
    }
}

fn apply_mode(mode: &Option<String>, cfg: &mut PipelineConfig) -> Result<()> {
    if let Some(m) = mode {
        cfg.filter.mode = parse("filter", m)?;
    }
    Ok(())
}

fn dataset_name(cfg: &PipelineConfig) -> String {
    cfg.data.path.file_name().map_or_else(|| cfg.data.path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn stdout_io(e: io::Error) -> Failure {
    Failure::io("output", e)
}

/// Resolves the config (file, environment, flags) and runs the command.
pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    cfg.run.deterministic |= cli.deterministic;
    if let Some(out) = &cli.out {
        cfg.run.out = out.clone();
    }
    match &cli.command {
        Command::LoadStats { data } | Command::Audit { data } | Command::Filter { data, .. } => data.apply(&mut cfg),
        Command::Transform { data, transform } => {
            data.apply(&mut cfg);
            transform.apply(&mut cfg)?;
        }
        Command::Train { data, train, mode } => {
            data.apply(&mut cfg);
            train.apply(&mut cfg)?;
            apply_mode(mode, &mut cfg)?;
        }
        Command::Eval { data, mode, tie, split, dump_ranks, .. } => {
            data.apply(&mut cfg);
            apply_mode(mode, &mut cfg)?;
            if let Some(t) = tie {
                cfg.eval.tie = parse("eval", t)?;
            }
            cfg.eval.split = split.unwrap_or(cfg.eval.split);
            cfg.eval.dump_ranks |= dump_ranks;
        }
        Command::Run { data, transform, train, mode } => {
            data.apply(&mut cfg);
            transform.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
            apply_mode(mode, &mut cfg)?;
        }
        Command::SegmentDebug { epsilon, min_size, jump, gamma, .. } => {
            let t = &mut cfg.transform;
            t.epsilon = epsilon.unwrap_or(t.epsilon);
            t.min_size = min_size.unwrap_or(t.min_size);
            t.jump = jump.unwrap_or(t.jump);
            t.gamma = gamma.or(t.gamma);
        }
        Command::Export { .. } => {}
    }
    if let Command::Filter { mode, .. } = &cli.command {
        apply_mode(mode, &mut cfg)?;
    }
    cfg.resolve_seed();
    configure_threads(cfg.run.threads)?;
    dispatch(&cli.command, &cfg)
}

fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    // A second call in one process (tests) keeps the first pool.
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("thread pool already configured: {e}");
    }
    Ok(())
}

fn seed_of(cfg: &PipelineConfig) -> u64 {
    cfg.run.seed.unwrap_or(cfg.train.seed)
}

fn artifacts(cfg: &PipelineConfig, dir: &Path, command: &str) -> Result<Artifacts> {
    Artifacts::create(dir, command, &cfg.identity_toml(), seed_of(cfg)).map_err(|e| Failure::io("output", e))
}

fn dispatch(command: &Command, cfg: &PipelineConfig) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match command {
        Command::LoadStats { .. } => {
            let (g, report) = pipeline::load(cfg)?;
            pipeline::write_stats(&dataset_name(cfg), &g, &mut stdout).map_err(stdout_io)?;
            writeln!(stdout).map_err(stdout_io)?;
            pipeline::write_load_report(&report, &mut stdout).map_err(stdout_io)?;
        }
        Command::Transform { .. } => {
            cfg.check_data()?;
            cfg.check_transform()?;
            let (g, _) = pipeline::load(cfg)?;
            let out = pipeline::transform(cfg, &g)?;
            let mut art = artifacts(cfg, &cfg.run.out, "transform")?;
            let io = |e| Failure::io("transform", e);
            pipeline::write_graph(&mut art, "dataset", &out.graph).map_err(io)?;
            art.write("lineage.tsv", |w| out.lineage.write_tsv(&out.graph, w)).map_err(io)?;
            art.write("transform_report.txt", |w| out.report.write_text(w)).map_err(io)?;
            art.finish().map_err(io)?;
            out.report.write_text(&mut stdout).map_err(stdout_io)?;
        }
        Command::Audit { .. } => {
            let (g, _) = pipeline::load(cfg)?;
            let audit = leakage::audit(&tkg::strip_temporal(&g));
            audit.write_text(&mut stdout).map_err(stdout_io)?;
        }
        Command::Filter { .. } => {
            let (g, _) = pipeline::load(cfg)?;
            let filtered = pipeline::filter(&tkg::strip_temporal(&g), cfg.filter.mode)?;
            let mut art = artifacts(cfg, &cfg.run.out, "filter")?;
            let io = |e| Failure::io("filter", e);
            for (split, name) in tkg::SPLIT_FILES {
                art.write(name, |w| pipeline::write_triples(&g, filtered.get(split), w)).map_err(io)?;
            }
            let audit = leakage::audit(&filtered);
            art.write("audit.txt", |w| audit.write_text(w)).map_err(io)?;
            art.finish().map_err(io)?;
            for split in Split::ALL {
                writeln!(stdout, "{:<8}{}", split.name(), filtered.get(split).len()).map_err(stdout_io)?;
            }
        }
        Command::Train { .. } => {
            cfg.check_train()?;
            let (g, _) = pipeline::load(cfg)?;
            let filtered = pipeline::filter(&tkg::strip_temporal(&g), cfg.filter.mode)?;
            let trained = pipeline::train(cfg, &g, &filtered)?;
            let mut art = artifacts(cfg, &cfg.run.out, "train")?;
            pipeline::save_model(&mut art, &g, &trained.model)?;
            art.write("loss.csv", |w| pipeline::write_loss_curve(&trained.epoch_loss, w))
                .map_err(|e| Failure::io("train", e))?;
            art.finish().map_err(|e| Failure::io("train", e))?;
            writeln!(stdout, "final loss {}", trained.epoch_loss.last().copied().unwrap_or(f64::NAN)).map_err(stdout_io)?;
        }
        Command::Eval { checkpoint, .. } => {
            let (g, _) = pipeline::load(cfg)?;
            let saved = pipeline::load_model(checkpoint)?;
            let filtered = pipeline::filter(&tkg::strip_temporal(&g), cfg.filter.mode)?;
            let splits = pipeline::remap(&g, &filtered, &saved)?;
            let (records, report) = pipeline::evaluate(cfg, &saved.model, &splits)?;
            let mut art = artifacts(cfg, &cfg.run.out, "eval")?;
            let io = |e| Failure::io("eval", e);
            art.write("metrics.txt", |w| report.write_table(w)).map_err(io)?;
            art.write("metrics.csv", |w| report.write_csv(w)).map_err(io)?;
            if cfg.eval.dump_ranks {
                art.write("ranks.tsv", |w| tkge_core::eval::write_ranks(&records, w)).map_err(io)?;
            }
            art.finish().map_err(io)?;
            report.write_table(&mut stdout).map_err(stdout_io)?;
        }
        Command::SegmentDebug { signal, .. } => {
            let cpd_cfg = cfg.transform.cpd();
            cpd_cfg.validate().map_err(|e| Failure::config("segment", e))?;
            let signal = read_signal(signal)?;
            let out = cpd::bottom_up(&signal, &cpd_cfg).map_err(|e| Failure::data("segment", e))?;
            let bkps: Vec<String> = out.segmentation.breakpoints().iter().map(|b| b.to_string()).collect();
            writeln!(stdout, "breakpoints {}", bkps.join(" ")).map_err(stdout_io)?;
            writeln!(stdout, "gamma {}", out.gamma).map_err(stdout_io)?;
            writeln!(stdout, "cost {}", out.cost).map_err(stdout_io)?;
            if out.constant {
                writeln!(stdout, "note constant signal").map_err(stdout_io)?;
            }
        }
        Command::Run { .. } => {
            cfg.validate()?;
            let grid = cfg.grid();
            for (name, point) in &grid {
                let dir = if name.is_empty() { cfg.run.out.clone() } else { cfg.run.out.join(name) };
                let mut art = artifacts(point, &dir, "run")?;
                let report = pipeline::run_pipeline(point, &mut art)?;
                art.write("config.toml", |w| w.write_all(point.identity_toml().as_bytes())).map_err(|e| Failure::io("run", e))?;
                art.finish().map_err(|e| Failure::io("run", e))?;
                if grid.len() > 1 {
                    writeln!(stdout, "== {name}").map_err(stdout_io)?;
                }
                report.write_table(&mut stdout).map_err(stdout_io)?;
            }
        }
        Command::Export { checkpoint } => {
            let saved = pipeline::load_model(checkpoint)?;
            let mut art = artifacts(cfg, &cfg.run.out, "export")?;
            let io = |e| Failure::io("export", e);
            let m = &saved.model;
            art.write("entity_vectors.tsv", |w| m.export_tsv(m.entity_matrix(), &saved.entities, w)).map_err(io)?;
            art.write("predicate_vectors.tsv", |w| m.export_tsv(m.predicate_matrix(), &saved.predicates, w)).map_err(io)?;
            art.finish().map_err(io)?;
        }
    }
    Ok(())
}

/// Comma-separated rows of numbers; a non-numeric first line is a header.
pub fn read_signal(path: &Path) -> Result<Signal> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data("segment", format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Failure::data("segment", format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Signal::from_rows(&rows).map_err(|e| Failure::data("segment", e))
}
