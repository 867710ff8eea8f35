//! Output directory, config hashing and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{CliError, CliResult};

/// Hex SHA-256 of the canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Record of one run. Timestamps and the worker count are excluded from
/// the hash; everything else in the outputs is a function of the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub workers: usize,
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<String>,
    pub status: String,
    pub exit_code: i32,
}

/// Formats a float for CSV: shortest round-trip form, `.` decimal.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writer for the files of one run. Every JSON file and every CSV row
/// carries the config hash.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    hash: String,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path, hash: &str) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), hash: hash.to_string(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// Writes `{"config_hash": .., "result": value}` pretty-printed.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let doc = serde_json::json!({ "config_hash": self.hash, "result": value });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serialises");
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    /// Writes a CSV with a trailing `config_hash` column.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push_str(",config_hash\n");
        for row in rows {
            text.push_str(&row.join(","));
            text.push(',');
            text.push_str(&self.hash);
            text.push('\n');
        }
        self.put(name, text.as_bytes())
    }

    /// Appends the hash column to CSV text that already has a header line.
    pub fn write_csv_text(&mut self, name: &str, csv: &str) -> CliResult<()> {
        let mut text = String::with_capacity(csv.len() + 80);
        for (i, line) in csv.lines().enumerate() {
            text.push_str(line);
            text.push(',');
            text.push_str(if i == 0 { "config_hash" } else { &self.hash });
            text.push('\n');
        }
        self.put(name, text.as_bytes())
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> CliResult<()> {
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

/// A manifest with the timestamps removed, for byte comparisons of reruns.
pub fn strip_timestamps(manifest: &Value) -> Value {
    let mut m = manifest.clone();
    if let Some(obj) = m.as_object_mut() {
        obj.remove("started");
        obj.remove("finished");
    }
    m
}
