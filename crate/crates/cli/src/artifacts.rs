//! Output directory bookkeeping: every file written through [`Artifacts`]
//! is hashed and listed in `manifest.toml`, along with the config hash,
//! seed and tool version.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: &'a str,
    seed: u64,
    artifact: &'a [Entry],
}

pub struct Artifacts {
    root: PathBuf,
    command: String,
    config_sha256: String,
    seed: u64,
    entries: Vec<Entry>,
}

impl Artifacts {
    pub fn create(root: &Path, command: &str, config_toml: &str, seed: u64) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_owned(),
            command: command.to_owned(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            seed,
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `rel` (relative to the root) from the bytes `fill` produces.
    pub fn write(&mut self, rel: &str, fill: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<PathBuf> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, &buf)?;
        self.entries.retain(|e| e.path != rel);
        self.entries.push(Entry { path: rel.to_owned(), sha256: sha256_hex(&buf), bytes: buf.len() });
        Ok(path)
    }

    pub fn finish(self) -> io::Result<PathBuf> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_sha256: &self.config_sha256,
            seed: self.seed,
            artifact: &self.entries,
        };
        let text = toml::to_string(&manifest).map_err(io::Error::other)?;
        let path = self.root.join(MANIFEST);
        fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::create(dir.path(), "audit", "x = 1\n", 3).unwrap();
        a.write("sub/report.txt", |w| {
            w.extend_from_slice(b"abc");
            Ok(())
        })
        .unwrap();
        let m = fs::read_to_string(a.finish().unwrap()).unwrap();
        assert!(m.contains("seed = 3"));
        assert!(m.contains("path = \"sub/report.txt\""));
        assert!(m.contains("ba7816bf"));
        assert_eq!(fs::read(dir.path().join("sub/report.txt")).unwrap(), b"abc");
    }
}
