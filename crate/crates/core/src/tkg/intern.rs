use std::collections::HashMap;
use std::io::{self, BufRead, Write};

/// Bijection between string labels and dense ids, in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for l in labels {
            let l = l.into();
            if v.get(&l).is_some() {
                return Err(l);
            }
            v.intern(&l);
        }
        Ok(v)
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = u32::try_from(self.labels.len()).expect("vocabulary overflow");
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Writes `id<TAB>label` lines.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(w, "{i}\t{l}")?;
        }
        Ok(())
    }

    /// Reads the layout produced by [`Vocab::write_tsv`]; ids must be dense
    /// and in order.
    pub fn read_tsv<R: BufRead>(r: R) -> io::Result<Self> {
        let mut v = Vocab::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {line}", n + 1));
            let (id, label) = line.split_once('\t').ok_or_else(bad)?;
            let id: usize = id.parse().map_err(|_| bad())?;
            if id != v.len() || v.get(label).is_some() {
                return Err(bad());
            }
            v.intern(label);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_a_bijection() {
        let mut v = Vocab::new();
        let a = v.intern("a");
        let b = v.intern("b");
        assert_eq!(v.intern("a"), a);
        assert_ne!(a, b);
        assert_eq!(v.label(b), "b");
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocab::from_labels(["x", "y y", "<z>"]).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(Vocab::read_tsv(&buf[..]).unwrap(), v);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert_eq!(Vocab::from_labels(["a", "a"]).unwrap_err(), "a");
    }
}
