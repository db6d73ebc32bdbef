use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use super::{
    EntityId, ParsedTime, PredicateId, Quintuple, Split, TemporalGraph, TimeAxis, TimeKind,
    Vocab,
};

/// File name of each split inside a dataset directory.
pub const SPLIT_FILES: [(Split, &str); 3] = [
    (Split::Train, "train.txt"),
    (Split::Valid, "valid.txt"),
    (Split::Test, "test.txt"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `s<TAB>p<TAB>o<TAB>begin<TAB>end`
    ValidTime,
    /// `s<TAB>p<TAB>o<TAB>timestamp`, converted with `b = e = h`.
    Event,
}

impl DatasetFormat {
    fn columns(self) -> usize {
        match self {
            DatasetFormat::ValidTime => 5,
            DatasetFormat::Event => 4,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valid_time" | "valid-time" => Ok(DatasetFormat::ValidTime),
            "event" => Ok(DatasetFormat::Event),
            other => Err(format!("unknown dataset format `{other}` (expected valid_time or event)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    pub time_kind: TimeKind,
    /// Field values that mean "no time given". Fields whose year is masked
    /// with `#` are always treated as missing.
    pub missing_tokens: Vec<String>,
    /// Drop valid-time facts whose begin and end are both missing.
    pub drop_unscoped: bool,
}

impl LoadOptions {
    pub fn valid_time() -> Self {
        Self {
            format: DatasetFormat::ValidTime,
            time_kind: TimeKind::Year,
            missing_tokens: default_missing_tokens(),
            drop_unscoped: true,
        }
    }

    pub fn event() -> Self {
        Self {
            format: DatasetFormat::Event,
            time_kind: TimeKind::Date,
            missing_tokens: default_missing_tokens(),
            drop_unscoped: true,
        }
    }
}

fn default_missing_tokens() -> Vec<String> {
    ["", "-", "None", "none", "nan", "NaN", "####", "####-##-##"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: expected {expected} tab-separated columns, found {found}")]
    Malformed {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} contains no facts")]
    EmptySplit(PathBuf),
    #[error("no fact in the dataset carries a usable timestamp")]
    NoTimestamps,
}

/// What the loader repaired or discarded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub kept: usize,
    pub filled_begin: usize,
    pub filled_end: usize,
    pub dropped_unparseable: usize,
    pub dropped_reversed: usize,
    pub dropped_unscoped: usize,
}

struct RawFact<'a> {
    split: Split,
    s: &'a str,
    p: &'a str,
    o: &'a str,
    b: Option<i64>,
    e: Option<i64>,
}

/// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
///
/// Missing begin times become the first timestamp of the dataset and missing
/// end times the last. Facts with an unparseable time or with end before
/// begin are dropped. Identifiers are interned in file order (train, valid,
/// test), so loading is deterministic.
pub fn load_dataset(dir: &Path, opts: &LoadOptions) -> Result<(TemporalGraph, LoadReport), LoadError> {
    let mut contents = Vec::with_capacity(3);
    for (split, name) in SPLIT_FILES {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|source| LoadError::Io { path: path.clone(), source })?;
        contents.push((split, path, text));
    }

    let mut report = LoadReport::default();
    let mut raw = Vec::new();
    for (split, path, text) in &contents {
        let before = raw.len();
        let mut nonblank = 0usize;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            nonblank += 1;
            report.lines += 1;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != opts.format.columns() {
                return Err(LoadError::Malformed {
                    path: path.clone(),
                    line: n + 1,
                    expected: opts.format.columns(),
                    found: cols.len(),
                });
            }
            let parse = |f: &str| opts.time_kind.parse(f, &opts.missing_tokens);
            let (b, e) = match opts.format {
                DatasetFormat::ValidTime => (parse(cols[3]), parse(cols[4])),
                DatasetFormat::Event => {
                    let h = parse(cols[3]);
                    (h, h)
                }
            };
            let (b, e) = match (b, e) {
                (ParsedTime::Invalid, _) | (_, ParsedTime::Invalid) => {
                    report.dropped_unparseable += 1;
                    continue;
                }
                (ParsedTime::Missing, ParsedTime::Missing) => {
                    if opts.format == DatasetFormat::Event || opts.drop_unscoped {
                        report.dropped_unscoped += 1;
                        continue;
                    }
                    (None, None)
                }
                (b, e) => (value(b), value(e)),
            };
            if let (Some(b), Some(e)) = (b, e) {
                if e < b {
                    report.dropped_reversed += 1;
                    continue;
                }
            }
            raw.push(RawFact {
                split: *split,
                s: cols[0].trim(),
                p: cols[1].trim(),
                o: cols[2].trim(),
                b,
                e,
            });
        }
        if nonblank == 0 || raw.len() == before {
            return Err(LoadError::EmptySplit(path.clone()));
        }
    }

    let observed: Vec<i64> = raw.iter().flat_map(|f| [f.b, f.e]).flatten().collect();
    let times = TimeAxis::new(opts.time_kind, observed);
    let (first, last) = match (times.first(), times.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(LoadError::NoTimestamps),
    };
    let id_of = |v: i64| times.id_of(v).expect("observed value is on the axis");

    let mut entities = Vocab::new();
    let mut predicates = Vocab::new();
    let mut facts = Vec::with_capacity(raw.len());
    for f in &raw {
        let b = match f.b {
            Some(v) => id_of(v),
            None => {
                report.filled_begin += 1;
                first
            }
        };
        let e = match f.e {
            Some(v) => id_of(v),
            None => {
                report.filled_end += 1;
                last
            }
        };
        let s = EntityId(entities.intern(f.s));
        let p = PredicateId(predicates.intern(f.p));
        let o = EntityId(entities.intern(f.o));
        facts.push((Quintuple { s, p, o, b, e }, f.split));
    }
    report.kept = facts.len();
    let graph = TemporalGraph::new(Arc::new(entities), Arc::new(predicates), Arc::new(times), facts)
        .expect("loader produces consistent ids");
    Ok((graph, report))
}

fn value(t: ParsedTime) -> Option<i64> {
    match t {
        ParsedTime::Value(v) => Some(v),
        _ => None,
    }
}

/// Writes a graph in the valid-time layout, one file per split.
pub fn write_dataset(dir: &Path, g: &TemporalGraph) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (split, name) in SPLIT_FILES {
        let mut w = BufWriter::new(fs::File::create(dir.join(name))?);
        for (f, s) in g.iter() {
            if s != split {
                continue;
            }
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                g.entity_label(f.s),
                g.predicate_label(f.p),
                g.entity_label(f.o),
                g.time_label(f.b),
                g.time_label(f.e),
            )?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tkg::TimeId;

    fn write(dir: &Path, train: &str, valid: &str, test: &str) {
        fs::write(dir.join("train.txt"), train).unwrap();
        fs::write(dir.join("valid.txt"), valid).unwrap();
        fs::write(dir.join("test.txt"), test).unwrap();
    }

    #[test]
    fn fills_missing_and_drops_invalid() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "a\tr\tb\t1990\t1995\n\
             a\tr\tc\t####-##-##\t1992\n\
             b\tq\tc\t1993\t####\n\
             c\tq\ta\t1999\t1991\n\
             c\tq\tb\t19x9\t2000\n",
            "a\tq\tb\t1991-##-##\t1991-##-##\n",
            "b\tr\ta\t2000\t2001\n",
        );
        let (g, rep) = load_dataset(d.path(), &LoadOptions::valid_time()).unwrap();
        assert_eq!(rep.dropped_reversed, 1);
        assert_eq!(rep.dropped_unparseable, 1);
        assert_eq!(rep.filled_begin, 1);
        assert_eq!(rep.filled_end, 1);
        assert_eq!(g.len(), 5);
        assert_eq!(g.times().values(), &[1990, 1991, 1992, 1993, 1995, 2000, 2001]);
        let filled_b = g.facts()[1];
        assert_eq!(filled_b.b, TimeId(0));
        assert_eq!(g.time_label(filled_b.e), "1992");
        let filled_e = g.facts()[2];
        assert_eq!(filled_e.e, g.times().last().unwrap());
        assert_eq!(g.split_len(Split::Train), 3);
        assert_eq!(g.split_len(Split::Valid), 1);
        assert_eq!(g.split_len(Split::Test), 1);
        // "c q a 1999 1991" is gone: end before begin.
        assert!(!g.facts().iter().any(|f| g.entity_label(f.s) == "c" && g.entity_label(f.o) == "a"));
    }

    #[test]
    fn single_reversed_line_is_absent() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a\tr\tb\t2005\t2001\nx\tr\ty\t2001\t2002\n", "x\tr\ty\t2001\t2001\n", "x\tr\ty\t2002\t2002\n");
        let (g, _) = load_dataset(d.path(), &LoadOptions::valid_time()).unwrap();
        assert!(g.entities().get("a").is_none());
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn event_format_sets_begin_equal_end() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "a\tr\tb\t2014-01-02\na\tr\tb\t2014-01-01\n",
            "b\tr\ta\t2014-01-03\n",
            "a\tr\tb\t2014-01-03\n",
        );
        let (g, _) = load_dataset(d.path(), &LoadOptions::event()).unwrap();
        assert_eq!(g.num_timestamps(), 3);
        assert!(g.facts().iter().all(|f| f.b == f.e));
        assert_eq!(g.time_label(g.facts()[0].b), "2014-01-02");
        assert_eq!(g.facts()[1].b, TimeId(0));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a\tr\tb\t1\t2\n\na\tr\n", "a\tr\tb\t1\t2\n", "a\tr\tb\t1\t2\n");
        let err = load_dataset(d.path(), &LoadOptions::valid_time()).unwrap_err();
        match err {
            LoadError::Malformed { line, found, .. } => assert_eq!((line, found), (3, 2)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_split_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a\tr\tb\t1\t2\n", "\n", "a\tr\tb\t1\t2\n");
        assert!(matches!(
            load_dataset(d.path(), &LoadOptions::valid_time()),
            Err(LoadError::EmptySplit(_))
        ));
        assert!(matches!(
            load_dataset(&d.path().join("nope"), &LoadOptions::valid_time()),
            Err(LoadError::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_is_identity() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "a\tr\tb\t1990\t1995\nb\tq\tc\t1991\t1991\n",
            "a\tq\tc\t1992\t1995\n",
            "c\tr\ta\t1990\t1990\n",
        );
        let (g, _) = load_dataset(d.path(), &LoadOptions::valid_time()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_dataset(out.path(), &g).unwrap();
        let (g2, _) = load_dataset(out.path(), &LoadOptions::valid_time()).unwrap();
        assert_eq!(g, g2);
    }
}
