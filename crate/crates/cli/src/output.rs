//! CSV tables and the JSON run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Bumped whenever a column of any table changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Shortest decimal representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(n) => n.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => u8::from(*b).to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::I(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::I(n as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::B(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::S(s)
    }
}

/// In-memory table written in one pass so row order never depends on scheduling.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    /// CSV bytes: a comment line with schema version and config hash, the
    /// header, then the rows.
    pub fn to_csv(&self, config_hash: &str) -> Result<Vec<u8>, CliError> {
        let mut out = format!("# optibind {} schema_version={CSV_SCHEMA_VERSION} config_sha256={config_hash}\n", self.name).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub csv_schema_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
    pub summary: serde_json::Value,
    /// Only field that changes between identical runs.
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `tables` into `dir` and returns their manifest entries.
pub fn write_tables(dir: &Path, tables: &[Table], config_hash: &str) -> Result<Vec<FileEntry>, CliError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for t in tables {
        let bytes = t.to_csv(config_hash)?;
        let path: PathBuf = dir.join(format!("{}.csv", t.name));
        fs::write(&path, &bytes)?;
        entries.push(FileEntry { path: format!("{}.csv", t.name), sha256: sha256_hex(&bytes), rows: t.rows.len() });
    }
    Ok(entries)
}
