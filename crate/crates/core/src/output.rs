//! Run artifacts: CSV tables, the JSON summary and the checksum manifest.
//!
//! Artifacts are assembled in memory and written by one writer at the end
//! of a run.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// A CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Shortest round-trip form; scientific notation outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub started: String,
    pub finished: String,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Named file contents awaiting a write.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_table(&mut self, path: impl Into<String>, table: &Table) -> Result<()> {
        self.add(path, table.to_csv()?);
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<String>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(p, _)| p.as_str())
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == path).map(|(_, b)| b.as_slice())
    }

    /// Writes every file under `dir`, then the manifest listing them.
    pub fn write(&self, dir: &Path, config_bytes: &[u8], started: DateTime<Utc>) -> Result<RunManifest> {
        let mut files = Vec::with_capacity(self.files.len());
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, bytes)?;
            files.push(FileEntry { path: rel.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_bytes),
            started: started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), bytes)?;
        Ok(manifest)
    }
}

/// Recomputes every checksum listed in `dir/manifest.json`; returns the
/// paths that are missing or differ.
pub fn verify_manifest(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        let p = dir.join(&f.path);
        match fs::read(&p) {
            Ok(b) if sha256_hex(&b) == f.sha256 => {}
            _ => bad.push(p),
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting_and_numbers() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(0.1), "x,y".into()]);
        t.push(vec![num(3.0), opt_num(None)]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n0.1,\"x,y\"\n3,\n");
        assert_eq!(num(-1.5e-17), "-1.5e-17");
        assert_eq!(num(2.5e20), "2.5e20");
        assert_eq!(num(0.0), "0");
        assert_eq!("-1.5e-17".parse::<f64>().unwrap(), -1.5e-17);
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("x.csv", b"a\n1\n".to_vec());
        a.add("sub/y.csv", b"b\n".to_vec());
        let m = a.write(dir.path(), b"{}", Utc::now()).unwrap();
        assert_eq!(m.files.len(), 2);
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join("x.csv"), b"tampered").unwrap();
        assert_eq!(verify_manifest(dir.path()).unwrap().len(), 1);
    }
}
