use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dml_core::metrics::{boxplot, BoxplotStats};

use crate::apply::ApplyLine;
use crate::output::{ensure_dir, write_csv, write_json, ResultLine, SummaryRow};
use crate::simulate::summarize_lines;
use crate::CliError;

/// A line that could not be parsed as a result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Malformed {
    pub file: PathBuf,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotEntry {
    pub case: String,
    pub cell: String,
    pub method: String,
    pub truth: f64,
    pub stats: BoxplotStats,
}

pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
    pub boxplots: Vec<BoxplotEntry>,
    pub malformed: Vec<Malformed>,
}

/// All `*.jsonl` files below `dir`, sorted by path.
pub fn find_result_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| CliError::io(format!("cannot read {}: {e}", d.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::io(e.to_string()))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Merges every simulation result below `dir` and writes
/// `report_summary.csv` and `boxplots.json` to `out`. Application results
/// are recognised and left out; unparseable lines are collected in
/// `malformed` and skipped.
pub fn run_report(dir: &Path, out: &Path) -> Result<ReportOutput, CliError> {
    if !dir.is_dir() {
        return Err(CliError::io(format!("{} is not a directory", dir.display())));
    }
    let files = find_result_files(dir)?;
    let mut lines = Vec::new();
    let mut malformed = Vec::new();
    for file in &files {
        let text = fs::read_to_string(file).map_err(|e| CliError::io(format!("cannot read {}: {e}", file.display())))?;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ResultLine>(raw) {
                Ok(l) => lines.push(l),
                Err(e) => {
                    if serde_json::from_str::<ApplyLine>(raw).is_err() {
                        malformed.push(Malformed {
                            file: file.clone(),
                            line: i + 1,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    if lines.is_empty() {
        return Err(CliError::config(format!("no results found under {}", dir.display())));
    }
    lines.sort_by(|a, b| {
        (&a.case, &a.cell, &a.method, a.rep, a.data_seed).cmp(&(&b.case, &b.cell, &b.method, b.rep, b.data_seed))
    });
    let summary = summarize_lines(&lines)?;

    let mut groups: BTreeMap<(&str, &str, &str), (f64, Vec<f64>)> = BTreeMap::new();
    for l in &lines {
        if let Some(e) = &l.estimate {
            groups
                .entry((&l.case, &l.cell, &l.method))
                .or_insert_with(|| (l.truth, Vec::new()))
                .1
                .push(e.theta_hat);
        }
    }
    let mut boxplots = Vec::new();
    for ((case, cell, method), (truth, values)) in groups {
        boxplots.push(BoxplotEntry {
            case: case.into(),
            cell: cell.into(),
            method: method.into(),
            truth,
            stats: boxplot(&values)?,
        });
    }

    ensure_dir(out)?;
    write_csv(&out.join("report_summary.csv"), &summary)?;
    write_json(&out.join("boxplots.json"), &boxplots)?;
    Ok(ReportOutput {
        files,
        summary,
        boxplots,
        malformed,
    })
}
