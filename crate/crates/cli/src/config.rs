//! Pipeline configuration: a TOML file with one table per stage, environment
//! overrides (`TKGE_<SECTION>_<KEY>`) and range validation.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tkge_core::cpd::CpdConfig;
use tkge_core::embed::{NegativeCount, Norm, TrainConfig};
use tkge_core::eval::TieRule;
use tkge_core::leakage::FilterMode;
use tkge_core::proximity::{Measure, NeighborhoodScope};
use tkge_core::tkg::{LoadOptions, TimeKind, SPLIT_FILES};
use tkge_core::transform::Method;

use crate::error::Failure;

pub const ENV_PREFIX: &str = "TKGE_";
const SECTIONS: [&str; 7] = ["data", "transform", "filter", "train", "eval", "sweep", "run"];

/// Serde adapter for types with `FromStr` and `Display`.
mod text {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    ValidTime,
    Event,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Predicate,
    Graph,
}

impl From<Scope> for NeighborhoodScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Predicate => NeighborhoodScope::Predicate,
            Scope::Graph => NeighborhoodScope::Graph,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Valid,
    #[default]
    Test,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NegativeUnit {
    #[default]
    Batch,
    Positive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub format: Format,
    /// Defaults to `year` for valid-time data and `date` for event data.
    pub time_kind: Option<String>,
    pub drop_unscoped: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { path: PathBuf::new(), format: Format::ValidTime, time_kind: None, drop_unscoped: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSection {
    #[serde(with = "text")]
    pub method: Method,
    pub grow: f64,
    /// `inf` merges down to one predicate per source.
    pub shrink: f64,
    pub epsilon: f64,
    #[serde(with = "text")]
    pub score: Measure,
    pub scope: Scope,
    pub min_size: usize,
    pub jump: usize,
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl Default for TransformSection {
    fn default() -> Self {
        let cpd = CpdConfig::default();
        Self {
            method: Method::Vanilla,
            grow: 2.0,
            shrink: 2.0,
            epsilon: cpd.epsilon,
            score: Measure::Jaccard,
            scope: Scope::Predicate,
            min_size: cpd.min_size,
            jump: cpd.jump,
            gamma: None,
            seed: 0,
        }
    }
}

impl TransformSection {
    pub fn cpd(&self) -> CpdConfig {
        CpdConfig { min_size: self.min_size, jump: self.jump, epsilon: self.epsilon, gamma: self.gamma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    #[serde(with = "text")]
    pub mode: FilterMode,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { mode: FilterMode::Inter }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub negatives_per: NegativeUnit,
    pub margin: f64,
    pub temperature: f64,
    #[serde(with = "text")]
    pub norm: Norm,
    pub detach_weights: bool,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        let NegativeCount::PerBatch(negatives) = d.negatives else { unreachable!("default is per batch") };
        Self {
            epochs: d.epochs,
            dim: d.dim,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            negatives,
            negatives_per: NegativeUnit::Batch,
            margin: d.margin,
            temperature: d.temperature,
            norm: d.norm,
            detach_weights: d.detach_weights,
            seed: d.seed,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            dim: self.dim,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            negatives: match self.negatives_per {
                NegativeUnit::Batch => NegativeCount::PerBatch(self.negatives),
                NegativeUnit::Positive => NegativeCount::PerPositive(self.negatives),
            },
            margin: self.margin,
            temperature: self.temperature,
            norm: self.norm,
            seed: self.seed,
            detach_weights: self.detach_weights,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: EvalSplit,
    #[serde(with = "text")]
    pub tie: TieRule,
    /// Also write per-query ranks.
    pub dump_ranks: bool,
}

/// Grid values; every combination gets its own output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grow: Vec<f64>,
    pub shrink: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl SweepSection {
    pub fn is_empty(&self) -> bool {
        self.grow.is_empty() && self.shrink.is_empty() && self.epsilon.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: PathBuf,
    /// Seeds both the transform and training stages when set.
    pub seed: Option<u64>,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub deterministic: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { out: PathBuf::from("out"), seed: None, threads: 0, deterministic: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSection,
    pub transform: TransformSection,
    pub filter: FilterSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub run: RunSection,
}

impl PipelineConfig {
    /// Parses TOML text, then applies overrides from `env`.
    pub fn from_toml_with_env<I>(text: &str, env: I) -> Result<Self, Failure>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Failure::config("config", e))?;
        apply_env(&mut table, env)?;
        table.try_into().map_err(|e: toml::de::Error| Failure::config("config", e))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::config("config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, std::env::vars())
    }

    /// Effective seed for transforms and training.
    pub fn resolve_seed(&mut self) {
        if let Some(seed) = self.run.seed {
            self.transform.seed = seed;
            self.train.seed = seed;
        }
        if self.run.deterministic {
            self.run.threads = 1;
        }
    }

    pub fn load_options(&self) -> Result<LoadOptions, Failure> {
        let mut opts = match self.data.format {
            Format::ValidTime => LoadOptions::valid_time(),
            Format::Event => LoadOptions::event(),
        };
        if let Some(kind) = &self.data.time_kind {
            opts.time_kind = kind.parse::<TimeKind>().map_err(|e| Failure::config("data", e))?;
        }
        opts.drop_unscoped = self.data.drop_unscoped;
        Ok(opts)
    }

    pub fn check_data(&self) -> Result<(), Failure> {
        let dir = &self.data.path;
        if dir.as_os_str().is_empty() {
            return Err(Failure::config("data", "data.path is not set"));
        }
        for (_, name) in SPLIT_FILES {
            let f = dir.join(name);
            if !f.is_file() {
                return Err(Failure::config("data", format!("{} does not exist", f.display())));
            }
        }
        self.load_options().map(drop)
    }

    pub fn check_transform(&self) -> Result<(), Failure> {
        let t = &self.transform;
        let bad = |msg: String| Err(Failure::config("transform", msg));
        let grows = std::iter::once(t.grow).chain(self.sweep.grow.iter().copied());
        for g in grows {
            if !(g.is_finite() && g > 1.0) {
                return bad(format!("grow must be finite and greater than 1, got {g}"));
            }
        }
        for s in std::iter::once(t.shrink).chain(self.sweep.shrink.iter().copied()) {
            if s.is_nan() || s <= 1.0 {
                return bad(format!("shrink must be greater than 1 (inf allowed), got {s}"));
            }
        }
        for eps in std::iter::once(t.epsilon).chain(self.sweep.epsilon.iter().copied()) {
            let cfg = CpdConfig { epsilon: eps, ..t.cpd() };
            cfg.validate().map_err(|e| Failure::config("transform", e))?;
        }
        Ok(())
    }

    pub fn check_train(&self) -> Result<(), Failure> {
        if self.train.epochs == 0 {
            return Err(Failure::config("train", "epochs must be positive"));
        }
        self.train.to_core().validate().map_err(|e| Failure::config("train", e))
    }

    /// Every range check, before any work starts.
    pub fn validate(&self) -> Result<(), Failure> {
        self.check_data()?;
        self.check_transform()?;
        self.check_train()
    }

    /// One config per sweep grid point, with a directory name for each.
    /// Without a sweep this is the config itself and an empty name.
    pub fn grid(&self) -> Vec<(String, PipelineConfig)> {
        if self.sweep.is_empty() {
            return vec![(String::new(), self.clone())];
        }
        let axis = |v: &[f64]| if v.is_empty() { vec![None::<f64>] } else { v.iter().map(|&x| Some(x)).collect() };
        let mut out = Vec::new();
        for g in axis(&self.sweep.grow) {
            for s in axis(&self.sweep.shrink) {
                for eps in axis(&self.sweep.epsilon) {
                    let mut cfg = self.clone();
                    cfg.sweep = SweepSection::default();
                    let mut name = Vec::new();
                    if let Some(g) = g {
                        cfg.transform.grow = g;
                        name.push(format!("grow{g}"));
                    }
                    if let Some(s) = s {
                        cfg.transform.shrink = s;
                        name.push(format!("shrink{s}"));
                    }
                    if let Some(eps) = eps {
                        cfg.transform.epsilon = eps;
                        name.push(format!("eps{eps}"));
                    }
                    out.push((format!("{}-{}", self.transform.method, name.join("-")), cfg));
                }
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// The config without its output location, which does not affect
    /// results. This is what manifests hash.
    pub fn identity_toml(&self) -> String {
        let mut c = self.clone();
        c.run.out = PathBuf::new();
        c.to_toml()
    }
}

/// Sets `[section] key = value` for every `TKGE_<SECTION>_<KEY>` variable.
/// Values are read as TOML when they parse, otherwise as strings.
fn apply_env<I>(table: &mut toml::Table, env: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in env {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let rest = rest.to_ascii_lowercase();
        let Some(section) = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_"))) else { continue };
        let key = &rest[section.len() + 1..];
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.clone()));
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sec) = entry else {
            return Err(Failure::config("config", format!("`{section}` must be a table")));
        };
        log::debug!("override {section}.{key} from {name}");
        sec.insert(key.to_owned(), value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, env: &[(&str, &str)]) -> Result<PipelineConfig, Failure> {
        PipelineConfig::from_toml_with_env(text, env.iter().map(|(k, v)| (k.to_string(), v.to_string())))
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse("", &[]).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = parse(
            "[transform]\nmethod = \"split-time\"\ngrow = 10.0\nscore = \"adar\"\n\
             [filter]\nmode = \"both\"\n[train]\nnorm = \"L2\"\nepochs = 3\n[eval]\ntie = \"mean\"\n",
            &[],
        )
        .unwrap();
        assert_eq!(c.transform.method, Method::SplitTime);
        assert_eq!(c.transform.grow, 10.0);
        assert_eq!(c.transform.score, Measure::AdamicAdar);
        assert_eq!(c.filter.mode, FilterMode::Both);
        assert_eq!((c.train.norm, c.train.epochs), (Norm::L2, 3));
        assert_eq!(c.eval.tie, TieRule::Mean);
    }

    #[test]
    fn env_overrides_file() {
        let c = parse(
            "[train]\nepochs = 3\n",
            &[("TKGE_TRAIN_EPOCHS", "7"), ("TKGE_TRANSFORM_METHOD", "merge"), ("TKGE_TRANSFORM_SHRINK", "inf"), ("HOME", "/x")],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.transform.method, Method::Merge);
        assert_eq!(c.transform.shrink, f64::INFINITY);
        assert!(parse("", &[("TKGE_TRAIN_LEARNING_RATE", "0.5")]).unwrap().train.learning_rate == 0.5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in ["[train]\nepoch = 3\n", "[transform]\nmethod = \"bogus\"\n", "[nope]\n", "[train]\nepochs = -1\n"] {
            let err = parse(text, &[]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn ranges_are_validated() {
        let mut c = PipelineConfig::default();
        c.transform.grow = 0.5;
        assert!(c.check_transform().is_err());
        c.transform.grow = 2.0;
        c.transform.shrink = f64::INFINITY;
        assert!(c.check_transform().is_ok());
        c.sweep.epsilon = vec![-1.0];
        assert!(c.check_transform().is_err());
        c.sweep.epsilon.clear();
        c.train.learning_rate = 0.0;
        assert!(c.check_train().is_err());
        c.train.learning_rate = 1e-3;
        c.train.epochs = 0;
        assert!(c.check_train().is_err());
        assert_eq!(c.check_data().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn grid_covers_every_combination() {
        let mut c = PipelineConfig::default();
        c.transform.method = Method::SplitTime;
        assert_eq!(c.grid().len(), 1);
        c.sweep.grow = vec![2.0, 5.0];
        c.sweep.epsilon = vec![1.0, 3.0, 5.0];
        let g = c.grid();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].0, "split-time-grow2-eps1");
        assert_eq!((g[5].1.transform.grow, g[5].1.transform.epsilon), (5.0, 5.0));
        assert!(g.iter().all(|(_, c)| c.sweep.is_empty()));
    }

    #[test]
    fn seed_flag_reaches_every_stage() {
        let mut c = PipelineConfig::default();
        c.run.seed = Some(9);
        c.run.deterministic = true;
        c.resolve_seed();
        assert_eq!((c.transform.seed, c.train.seed, c.run.threads), (9, 9, 1));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = PipelineConfig::default();
        c.transform.shrink = f64::INFINITY;
        c.transform.gamma = Some(0.25);
        let back = parse(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }
}
