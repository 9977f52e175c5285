//! Output directory with atomic writes and provenance headers.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub scenario_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct OutputDir {
    dir: PathBuf,
    pub meta: Meta,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl OutputDir {
    pub fn create(dir: PathBuf, meta: Meta) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, meta })
    }

    /// Writes `name` (a bare file name) via a temp file in the same directory.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(CliError::Usage(format!("refusing to write {name:?}")));
        }
        let target = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err(&self.dir))?;
        tmp.write_all(contents.as_bytes()).map_err(io_err(&target))?;
        tmp.persist(&target).map_err(|e| CliError::Io {
            path: target.display().to_string(),
            source: e.error,
        })?;
        Ok(target)
    }

    pub fn csv_header(&self) -> String {
        format!(
            "# {} {} scenario={} sha256={}\n",
            self.meta.tool, self.meta.version, self.meta.scenario, self.meta.scenario_sha256
        )
    }

    /// JSON document `{meta, ...body}`.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let mut doc = Map::new();
        doc.insert("meta".into(), serde_json::to_value(&self.meta).expect("meta serializes"));
        match serde_json::to_value(body).expect("body serializes") {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json");
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `table` as `<stem>.csv` or `<stem>.json`.
    pub fn write_table(&self, stem: &str, table: &Table, format: Format) -> Result<PathBuf> {
        match format {
            Format::Csv => self.write(&format!("{stem}.csv"), &format!("{}{}", self.csv_header(), table.to_csv())),
            Format::Json => self.write_json(&format!("{stem}.json"), &json!({ "rows": table.to_json_rows() })),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => v.to_string(),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(v) => v.clone(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json_rows(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (k, c) in self.columns.iter().zip(row) {
                    let v = match c {
                        Cell::Num(v) => json!(v),
                        Cell::Int(v) => json!(v),
                        Cell::Text(v) => json!(v),
                    };
                    m.insert(k.to_string(), v);
                }
                Value::Object(m)
            })
            .collect()
    }
}
