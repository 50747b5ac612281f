use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            _ => None,
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
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Long-format table written as one output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::text))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.columns
                            .iter()
                            .cloned()
                            .zip(r.iter().map(Cell::json))
                            .collect::<Map<_, _>>(),
                    )
                })
                .collect(),
        )
    }
}

/// Tables and a structured summary produced by one command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
}

impl Bundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.into(),
            serde_json::to_value(value).expect("summary value serializes"),
        );
    }

    /// Adds the tables and summary of `other`, prefixing its names.
    pub fn absorb(&mut self, prefix: &str, other: Bundle) {
        for mut t in other.tables {
            t.name = format!("{prefix}_{}", t.name);
            self.tables.push(t);
        }
        self.summary
            .insert(prefix.into(), Value::Object(other.summary));
    }
}

/// Provenance written into every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

/// Writes every table in `format` plus `summary.json` into `dir`. CSV files
/// start with a `#` comment line; JSON files carry the same fields at the top level.
pub fn write_bundle(
    dir: &Path,
    bundle: &Bundle,
    header: &Header,
    format: Format,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &bundle.tables {
        let (path, text) = match format {
            Format::Csv => (
                dir.join(format!("{}.csv", t.name)),
                format!("{}{}", header.comment(), t.to_csv()?),
            ),
            Format::Json => {
                let doc = json!({ "config_hash": header.config_hash, "seed": header.seed, "rows": t.to_json() });
                (
                    dir.join(format!("{}.json", t.name)),
                    serde_json::to_string_pretty(&doc)? + "\n",
                )
            }
        };
        fs::write(&path, text)?;
        written.push(path);
    }
    let mut summary = Map::new();
    summary.insert("config_hash".into(), json!(header.config_hash));
    summary.insert("seed".into(), json!(header.seed));
    summary.extend(bundle.summary.clone());
    let path = dir.join("summary.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&Value::Object(summary))? + "\n",
    )?;
    written.push(path);
    Ok(written)
}
