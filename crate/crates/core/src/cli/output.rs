use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.csv";

/// Fixed 17-significant-digit form used for every float written to disk.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// One cell of a CSV row.
#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::U(n) => n.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory of a single run. Files are written one at a time and
/// recorded for the manifest, which is written last.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    entries: Vec<(String, String)>,
}

impl RunDir {
    /// Errors if `root` already holds a manifest.
    pub fn ensure_fresh(root: &Path) -> Result<()> {
        if root.join(MANIFEST).exists() {
            return Err(Error::Manifest(format!(
                "{} already contains a manifest; use a fresh output directory",
                root.display()
            )));
        }
        Ok(())
    }

    pub fn create(root: &Path) -> Result<Self> {
        Self::ensure_fresh(root)?;
        fs::create_dir_all(root)
            .map_err(|e| Error::Config(format!("output directory {} not writable: {e}", root.display())))?;
        Ok(RunDir { root: root.to_path_buf(), entries: Vec::new() })
    }

    fn write(&mut self, name: &str, body: String) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Manifest(format!("{name} written twice in one run")));
        }
        fs::write(self.root.join(name), body.as_bytes())?;
        self.entries.push((name.to_string(), sha256_hex(body.as_bytes())));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
        let mut body = header.join(",");
        body.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            let cells: Vec<String> = row.iter().map(|c| c.render()).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.write(name, body)
    }

    /// Flat `key=value` sidecar, keys in the order given.
    pub fn meta(&mut self, name: &str, pairs: &[(String, String)]) -> Result<()> {
        let mut body = String::new();
        for (k, v) in pairs {
            let _ = writeln!(body, "{k}={v}");
        }
        self.write(name, body)
    }

    pub fn finish(self) -> Result<Vec<(String, String)>> {
        let mut body = String::from("file,sha256\n");
        for (n, h) in &self.entries {
            let _ = writeln!(body, "{n},{h}");
        }
        fs::write(self.root.join(MANIFEST), body)?;
        Ok(self.entries)
    }
}

pub fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

pub fn kf(key: &str, value: f64) -> (String, String) {
    (key.to_string(), fmt_f64(value))
}

pub fn parse_meta(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Reads `manifest.csv` in `dir` and checks every listed file against its hash.
pub fn read_manifest(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some("file,sha256") {
        return Err(Error::Manifest(format!("{} has no file,sha256 header", path.display())));
    }
    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (file, hash) = line
            .split_once(',')
            .ok_or_else(|| Error::Manifest(format!("malformed manifest line '{line}'")))?;
        let bytes = fs::read(dir.join(file))
            .map_err(|e| Error::Manifest(format!("listed file {file} is missing: {e}")))?;
        if sha256_hex(&bytes) != hash {
            return Err(Error::Manifest(format!("{file} does not match its recorded hash")));
        }
        entries.push((file.to_string(), hash.to_string()));
    }
    if entries.is_empty() {
        return Err(Error::Manifest(format!("{} lists no files", path.display())));
    }
    Ok(entries)
}
