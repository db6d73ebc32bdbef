//! Lineage sidecar: `derived<TAB>source<TAB>begin<TAB>end[<TAB>stamp]`.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::tkg::{ParsedTime, PredicateId, TemporalGraph, TimeAxis, TimeId, Vocab};

use super::PredicateLineage;

#[derive(Debug, Error)]
pub enum LineageError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("lineage lists {found} predicates but the graph has {expected}")]
    Count { expected: usize, found: usize },
}

impl PredicateLineage {
    pub fn write_tsv<W: Write>(&self, g: &TemporalGraph, mut w: W) -> io::Result<()> {
        for p in g.predicate_ids() {
            let (b, e) = self.interval(p);
            write!(
                w,
                "{}\t{}\t{}\t{}",
                g.predicate_label(p),
                self.source_label(p),
                g.time_label(b),
                g.time_label(e)
            )?;
            if let Some(t) = self.stamp(p) {
                write!(w, "\t{}", g.time_label(t))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a sidecar for a graph whose predicate vocabulary is `derived`.
    /// Source ids are assigned in order of first appearance.
    pub fn read_tsv<R: BufRead>(r: R, derived: &Vocab, times: &TimeAxis) -> Result<Self, LineageError> {
        let n = derived.len();
        let mut sources = Vocab::new();
        let mut rows: Vec<Option<(PredicateId, (TimeId, TimeId), Option<TimeId>)>> = vec![None; n];
        let mut found = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| LineageError::Malformed { line: i + 1, msg };
            let cols: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&cols.len()) {
                return Err(bad(format!("expected 4 or 5 columns, found {}", cols.len())));
            }
            let p = derived
                .get(cols[0])
                .ok_or_else(|| bad(format!("unknown derived predicate '{}'", cols[0])))?;
            let time = |raw: &str| match times.kind().parse(raw, &[]) {
                ParsedTime::Value(v) => times.id_of(v).ok_or_else(|| bad(format!("timestamp '{raw}' not on the axis"))),
                _ => Err(bad(format!("unparseable timestamp '{raw}'"))),
            };
            let interval = (time(cols[2])?, time(cols[3])?);
            let stamp = cols.get(4).map(|raw| time(raw)).transpose()?;
            let source = PredicateId(sources.intern(cols[1]));
            if rows[p as usize].replace((source, interval, stamp)).is_some() {
                return Err(bad(format!("duplicate entry for '{}'", cols[0])));
            }
            found += 1;
        }
        if found != n {
            return Err(LineageError::Count { expected: n, found });
        }
        let mut out = Self::with_sources(Arc::new(sources));
        for (source, interval, stamp) in rows.into_iter().flatten() {
            out.push(source, interval, stamp);
        }
        Ok(out)
    }
}
