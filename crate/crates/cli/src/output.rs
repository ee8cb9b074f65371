//! Result tables, their CSV and structured-text renderings, and the run
//! manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mmimo_core::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    /// Floats carry 9 significant digits; infinities and NaN are spelled
    /// out.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) if f.is_nan() => "nan".into(),
            Cell::Float(f) if f.is_infinite() => if *f > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Float(f) => format!("{f:.8e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    StructuredText,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::StructuredText => "txt",
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render(table: &Table, run_id: &str, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            let _ = writeln!(out, "run_id,{}", table.columns.join(","));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|c| csv_field(&c.render())).collect();
                let _ = writeln!(out, "{run_id},{}", cells.join(","));
            }
        }
        Format::StructuredText => {
            for row in &table.rows {
                let _ = write!(out, "table={} run_id={run_id}", table.name);
                for (col, cell) in table.columns.iter().zip(row) {
                    let v = cell.render();
                    if v.contains(char::is_whitespace) || v.is_empty() {
                        let _ = write!(out, " {col}={v:?}");
                    } else {
                        let _ = write!(out, " {col}={v}");
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Hex digest identifying a run: scenario text, subcommand, seed and tool
/// version.
pub fn run_id(scenario_text: &str, subcommand: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    for part in [scenario_text.as_bytes(), subcommand.as_bytes(), &seed.to_le_bytes(), VERSION.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub subcommand: String,
    /// Absent when the built-in defaults were used.
    pub scenario: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {}", path.display(), e.message())]))
    }
}

/// Writes every table into `dir` and the manifest beside them.
pub fn write_all(dir: &Path, tables: &[Table], manifest: &mut RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    manifest.outputs.clear();
    for t in tables {
        let name = format!("{}.{}", t.name, manifest.format.extension());
        fs::write(dir.join(&name), render(t, &manifest.run_id, manifest.format))?;
        manifest.outputs.push(name);
    }
    let text = toml::to_string(manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}
