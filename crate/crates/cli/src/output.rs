//! Output directory handling: manifests, tables and exit codes.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tmvnlab::io::write_atomic;
use tmvnlab::Error;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub format: Format,
    pub out: PathBuf,
}

/// Parameters read back from `--config`.
#[derive(Debug, Clone, Deserialize)]
pub struct StoredConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub config: Value,
}

impl Global {
    /// Explicit flags win over values stored in the config file.
    pub fn resolve(seed: Option<u64>, format: Option<Format>, out: PathBuf, stored: Option<&StoredConfig>) -> Self {
        Self {
            seed: seed.or(stored.and_then(|s| s.seed)).unwrap_or(DEFAULT_SEED),
            format: format.or(stored.and_then(|s| s.format)).unwrap_or(Format::Csv),
            out,
        }
    }
}

/// Accepts either a manifest (`{"config": {...}, "seed": ...}`) or a bare
/// parameter object.
pub fn load_config(path: &Path) -> tmvnlab::Result<StoredConfig> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if v.get("config").is_some() {
        serde_json::from_value(v).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    } else {
        Ok(StoredConfig { seed: None, format: None, config: v })
    }
}

pub fn pick<T: DeserializeOwned>(flags: T, stored: Option<Value>) -> tmvnlab::Result<T> {
    match stored {
        None => Ok(flags),
        Some(v) => serde_json::from_value(v).map_err(|e| Error::Parse(format!("config: {e}"))),
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_validation() || matches!(e, Error::Io(_)) {
        2
    } else {
        3
    }
}

/// Collects output files of one command invocation.
pub struct OutDir {
    pub global: Global,
    files: Vec<String>,
}

impl OutDir {
    pub fn new(global: &Global) -> tmvnlab::Result<Self> {
        std::fs::create_dir_all(&global.out)?;
        Ok(Self { global: global.clone(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.global.out.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> tmvnlab::Result<()> {
        write_atomic(&self.path(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Records a file written by other means (e.g. a chain directory).
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn write_json(&mut self, name: &str, v: &impl Serialize) -> tmvnlab::Result<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes a table as `<stem>.csv` or `<stem>.json` according to `--format`.
    pub fn write_table(&mut self, stem: &str, header: &[&str], rows: &[Vec<Cell>]) -> tmvnlab::Result<()> {
        match self.global.format {
            Format::Csv => {
                let mut s = header.join(",");
                s.push('\n');
                for r in rows {
                    let cells: Vec<String> = r.iter().map(Cell::render).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                self.write(&format!("{stem}.csv"), s.as_bytes())
            }
            Format::Json => {
                let objs: Vec<Value> = rows
                    .iter()
                    .map(|r| Value::Object(header.iter().zip(r).map(|(h, c)| (h.to_string(), c.json())).collect()))
                    .collect();
                self.write_json(&format!("{stem}.json"), &objs)
            }
        }
    }

    pub fn finish(mut self, command: &str, config: &impl Serialize, summary: Value) -> tmvnlab::Result<()> {
        let manifest = json!({
            "tool": "tmvnlab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.global.seed,
            "format": self.global.format,
            "config": config,
            "summary": summary,
            "outputs": self.files,
        });
        self.files = Vec::new();
        self.write_json("manifest.json", &manifest)
    }
}

/// A table cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => (*b as u8).to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}
