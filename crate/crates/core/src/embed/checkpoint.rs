//! Plain-text checkpoints and vector export.
//!
//! ```text
//! tkge-model 1
//! dim <d>
//! norm <L1|L2>
//! entities <n>
//! predicates <m>
//! <n entity rows, then m predicate rows; space-separated values>
//! ```
//! Values use Rust's shortest round-trip formatting, so a reload is exact.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::tkg::Vocab;

use super::{EmbeddingModel, Norm};

const MAGIC: &str = "tkge-model";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

impl EmbeddingModel {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "norm {}", self.norm)?;
        writeln!(w, "entities {}", self.num_entities())?;
        writeln!(w, "predicates {}", self.num_predicates())?;
        for row in self.entities.chunks_exact(self.dim).chain(self.predicates.chunks_exact(self.dim)) {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b" ")?;
                }
                write!(w, "{v}")?;
                first = false;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self, CheckpointError> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), CheckpointError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(CheckpointError::Malformed { line: 0, msg: format!("missing {what}") }),
            }
        };
        let bad = |line: usize, msg: String| CheckpointError::Malformed { line, msg };

        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| bad(ln, "not a model checkpoint".into()))?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut field = |key: &str| -> Result<String, CheckpointError> {
            let (ln, l) = next(key)?;
            l.strip_prefix(key)
                .map(|v| v.trim().to_owned())
                .ok_or_else(|| bad(ln, format!("expected '{key}'")))
        };
        let dim: usize = field("dim")?.parse().map_err(|e| bad(2, format!("dim: {e}")))?;
        let norm: Norm = field("norm")?.parse().map_err(|e| bad(3, e))?;
        let n_ent: usize = field("entities")?.parse().map_err(|e| bad(4, format!("entities: {e}")))?;
        let n_pred: usize = field("predicates")?.parse().map_err(|e| bad(5, format!("predicates: {e}")))?;

        let mut read_rows = |n: usize| -> Result<Vec<f64>, CheckpointError> {
            let mut out = Vec::with_capacity(n * dim);
            for _ in 0..n {
                let (ln, l) = next("vector row")?;
                let row: Vec<f64> = l
                    .split_ascii_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| bad(ln, format!("value '{v}': {e}"))))
                    .collect::<Result<_, _>>()?;
                if row.len() != dim {
                    return Err(bad(ln, format!("expected {dim} values, found {}", row.len())));
                }
                out.extend(row);
            }
            Ok(out)
        };
        let entities = read_rows(n_ent)?;
        let predicates = read_rows(n_pred)?;
        EmbeddingModel::from_parts(dim, norm, entities, predicates).map_err(|e| bad(0, e.to_string()))
    }

    /// `label<TAB>v1<TAB>...<TAB>vd` per row of `matrix`, labelled by `vocab`.
    pub fn export_tsv<W: Write>(&self, matrix: &[f64], vocab: &Vocab, mut w: W) -> io::Result<()> {
        for (i, row) in matrix.chunks_exact(self.dim).enumerate() {
            w.write_all(vocab.label(i as u32).as_bytes())?;
            for v in row {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
