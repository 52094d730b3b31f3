//! Result records, CSV tables and the on-disk layout of a run directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use magnon_core::optimize::OptimizationReport;
use magnon_core::protocols::velocity;
use magnon_core::ControlProtocol;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::plot::{self, PlotSpec};

pub const OUTPUT_ROOT_ENV: &str = "MAGNON_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "magnon-results";
pub const RECORD_FILE: &str = "record.json";

/// A CSV table; every column has a header and units are fixed by the header name.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl Table {
    pub fn new(file_name: &str, headers: &[&str]) -> Self {
        Table {
            file_name: file_name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width must match {}", self.file_name);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(&self.file_name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
        w.write_record(&self.headers).map_err(|e| CliError::io(&path, e))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Columns `t` (1/J), `x0` (sites) and `velocity` (sites·J); the velocity at
/// t_k is the forward difference over bin k and is blank at t = 0.
pub fn protocol_table(file_name: &str, protocol: &ControlProtocol) -> Table {
    let mut table = Table::new(file_name, &["t", "x0", "velocity"]);
    let v = velocity(protocol).unwrap_or_default();
    for (k, (t, x)) in protocol.times().into_iter().zip(&protocol.samples).enumerate() {
        let vel = if k == 0 { Cell::Empty } else { v.get(k - 1).copied().into() };
        table.push(vec![t.into(), (*x).into(), vel]);
    }
    table
}

/// `step` (0 = initial parameters) and `infidelity`.
pub fn history_table(file_name: &str, report: &OptimizationReport) -> Table {
    let mut table = Table::new(file_name, &["step", "infidelity"]);
    for (k, v) in report.infidelity_history.iter().enumerate() {
        table.push(vec![k.into(), (*v).into()]);
    }
    table
}

/// A labelled optimization report stored in the record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub label: String,
    pub report: OptimizationReport,
}

/// Everything a command computed, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub metrics: serde_json::Map<String, Value>,
    pub seeds: Vec<u64>,
    pub reports: Vec<NamedReport>,
    pub tables: Vec<Table>,
    pub plots: Vec<PlotSpec>,
}

impl Outcome {
    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(value).expect("metric serializes"));
    }

    pub fn report(&mut self, label: impl Into<String>, report: OptimizationReport) {
        self.reports.push(NamedReport {
            label: label.into(),
            report: report.without_timing(),
        });
    }
}

/// The persisted JSON record. `config`, `seeds`, `metrics` and `reports` are a
/// pure function of the config; only `created_unix_seconds` and
/// `wall_time_seconds` vary between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub command: String,
    pub code_version: String,
    pub created_unix_seconds: u64,
    pub wall_time_seconds: f64,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub metrics: Value,
    pub reports: Vec<NamedReport>,
    pub artifacts: Vec<String>,
}

/// `explicit` if given, else `<root>/<name>`.
pub fn run_dir(explicit: Option<&Path>, root: &Path, name: &str) -> PathBuf {
    explicit.map_or_else(|| root.join(name), Path::to_path_buf)
}

/// Writes tables, then plots rendered from the written tables, then the record.
pub fn persist(
    dir: &Path,
    command: &str,
    config: Value,
    outcome: Outcome,
    plots: bool,
    wall_time_seconds: f64,
) -> CliResult<ResultRecord> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut artifacts = Vec::new();
    for table in &outcome.tables {
        table.write(dir)?;
        artifacts.push(table.file_name.clone());
    }
    if plots {
        for spec in &outcome.plots {
            plot::render(dir, spec)?;
            artifacts.push(spec.file_name.clone());
        }
    }
    let created_unix_seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let record = ResultRecord {
        command: command.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix_seconds,
        wall_time_seconds,
        config,
        seeds: outcome.seeds,
        metrics: Value::Object(outcome.metrics),
        reports: outcome.reports,
        artifacts,
    };
    let path = dir.join(RECORD_FILE);
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(record)
}
