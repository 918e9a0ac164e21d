use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use dml_core::metrics::CellSummary;
use dml_core::simulation::CaseSuite;
use dml_core::EstimateRecord;

use crate::CliError;

/// One estimate (or failure) of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub case: String,
    pub cell: String,
    pub method: String,
    pub rep: usize,
    pub truth: f64,
    pub data_seed: u64,
    pub folds: usize,
    pub splits: usize,
    #[serde(default)]
    pub estimate: Option<EstimateRecord>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Flat summary row written to `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub case: String,
    pub cell: String,
    pub method: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub truth: f64,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub bias: f64,
    pub mae: f64,
    pub median_se: f64,
    pub mean_mse_w: Option<f64>,
    pub mean_mse_y: Option<f64>,
}

impl SummaryRow {
    pub fn new(s: &CellSummary, ses: &[f64], n_failed: usize) -> Self {
        SummaryRow {
            case: s.case.clone(),
            cell: s.cell.clone(),
            method: s.method.clone(),
            n_ok: s.n_reps,
            n_failed,
            truth: s.truth,
            mean: s.mean,
            median: s.median,
            q1: s.q1,
            q3: s.q3,
            bias: s.bias,
            mae: s.mae,
            median_se: dml_core::metrics::median(ses),
            mean_mse_w: s.mean_mse_w,
            mean_mse_y: s.mean_mse_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub cell: String,
    pub total: usize,
    pub ok: usize,
    pub failed: usize,
    pub failed_methods: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: Option<f64>,
    pub status: String,
    pub settings: serde_json::Value,
    pub suite: Option<CaseSuite>,
    pub cells: Vec<CellStatus>,
}

impl RunManifest {
    pub fn start(command: &str, config_path: Option<PathBuf>, seed: u64, out_dir: &Path, settings: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path,
            seed,
            out_dir: out_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_seconds: None,
            status: "running".into(),
            settings,
            suite: None,
            cells: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, lines: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    for l in lines {
        let text = serde_json::to_string(l).map_err(|e| CliError::config(e.to_string()))?;
        writeln!(out, "{text}").map_err(|e| CliError::io(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::io(e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}
