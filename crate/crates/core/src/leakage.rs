//! Duplicate auditing and filtering of stripped (atemporal) splits.
//!
//! Once temporal scope is removed, a triple can occur several times within a
//! split and a test triple can also occur in train. Both inflate link
//! prediction scores.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::tkg::{Split, StaticSplits, StaticTriple};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LeakageError {
    #[error("filter '{0}' removed every test triple")]
    EmptyTest(FilterMode),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Count {
    pub count: usize,
    pub fraction: f64,
}

impl Count {
    fn of(count: usize, total: usize) -> Self {
        let fraction = if total == 0 { 0.0 } else { count as f64 / total as f64 };
        Self { count, fraction }
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.fraction
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:.2}%)", self.count, self.percent())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DuplicateAudit {
    /// Surplus occurrences within each split, over the split size.
    pub duplicates: [Count; 3],
    /// Distinct test triples also in train, over the distinct test size.
    pub test_in_train: Count,
    /// Distinct valid triples also in train, over the distinct valid size.
    pub valid_in_train: Count,
}

impl DuplicateAudit {
    pub fn duplicates_in(&self, split: Split) -> Count {
        self.duplicates[split as usize]
    }

    pub fn is_clean(&self) -> bool {
        self.duplicates.iter().all(|c| c.count == 0) && self.test_in_train.count == 0 && self.valid_in_train.count == 0
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for split in Split::ALL {
            writeln!(w, "{:<18}{}", format!("{split} duplicates"), self.duplicates_in(split))?;
        }
        writeln!(w, "{:<18}{}", "valid in train", self.valid_in_train)?;
        writeln!(w, "{:<18}{}", "test in train", self.test_in_train)
    }

    /// `metric,count,percent` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "metric,count,percent")?;
        let rows = Split::ALL
            .iter()
            .map(|&s| (format!("{s}_duplicates"), self.duplicates_in(s)))
            .chain([
                ("valid_in_train".to_owned(), self.valid_in_train),
                ("test_in_train".to_owned(), self.test_in_train),
            ]);
        for (name, c) in rows {
            writeln!(w, "{name},{},{:.4}", c.count, c.percent())?;
        }
        Ok(())
    }
}

fn distinct(triples: &[StaticTriple]) -> HashSet<StaticTriple> {
    triples.iter().copied().collect()
}

fn in_train(split: &HashSet<StaticTriple>, train: &HashSet<StaticTriple>) -> Count {
    Count::of(split.iter().filter(|t| train.contains(t)).count(), split.len())
}

pub fn audit(splits: &StaticSplits) -> DuplicateAudit {
    let sets = Split::ALL.map(|s| distinct(splits.get(s)));
    let duplicates = Split::ALL.map(|s| {
        let n = splits.get(s).len();
        Count::of(n - sets[s as usize].len(), n)
    });
    let train = &sets[Split::Train as usize];
    DuplicateAudit {
        duplicates,
        test_in_train: in_train(&sets[Split::Test as usize], train),
        valid_in_train: in_train(&sets[Split::Valid as usize], train),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FilterMode {
    #[default]
    None,
    /// Drop valid/test triples that occur in train.
    Inter,
    /// Deduplicate each split.
    Intra,
    /// Intra, then inter.
    Both,
}

impl FilterMode {
    pub const ALL: [FilterMode; 4] = [FilterMode::None, FilterMode::Inter, FilterMode::Intra, FilterMode::Both];

    pub fn name(self) -> &'static str {
        match self {
            FilterMode::None => "none",
            FilterMode::Inter => "inter",
            FilterMode::Intra => "intra",
            FilterMode::Both => "both",
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown filter mode '{s}' (expected none, inter, intra or both)"))
    }
}

/// Keeps the first occurrence of every triple, preserving order.
fn dedup(triples: &mut Vec<StaticTriple>) {
    let mut seen = HashSet::with_capacity(triples.len());
    triples.retain(|t| seen.insert(*t));
}

pub fn apply_filter(splits: &StaticSplits, mode: FilterMode) -> Result<StaticSplits, LeakageError> {
    let mut out = splits.clone();
    if matches!(mode, FilterMode::Intra | FilterMode::Both) {
        for s in Split::ALL {
            dedup(out.get_mut(s));
        }
    }
    if matches!(mode, FilterMode::Inter | FilterMode::Both) {
        let train = distinct(&out.train);
        out.valid.retain(|t| !train.contains(t));
        out.test.retain(|t| !train.contains(t));
    }
    if out.test.is_empty() && !splits.test.is_empty() {
        return Err(LeakageError::EmptyTest(mode));
    }
    Ok(out)
}
