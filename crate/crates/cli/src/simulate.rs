use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use dml_core::metrics::summarize;
use dml_core::seeding::derive_seed;
use dml_core::simulation::{baseline_suite, case_suite, replication_seed, CaseSuite};

use crate::methods::{run_method, Method, Settings};
use crate::output::{ensure_dir, write_csv, write_jsonl, CellStatus, ResultLine, RunManifest, SummaryRow};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOptions {
    pub case: String,
    /// Sample sizes to keep; empty keeps the full grid.
    pub sizes: Vec<usize>,
    /// Cell labels to keep; empty keeps every cell.
    pub cells: Vec<String>,
    pub reps: Option<usize>,
    pub seed: u64,
    pub folds: usize,
    pub splits: usize,
    /// Methods to run; empty runs the suite's grid.
    #[serde(skip)]
    pub methods: Vec<Method>,
    pub trim: f64,
    pub out: PathBuf,
    pub config_path: Option<PathBuf>,
}

impl SimulateOptions {
    pub fn new(case: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        SimulateOptions {
            case: case.into(),
            sizes: Vec::new(),
            cells: Vec::new(),
            reps: None,
            seed: 42,
            folds: 5,
            splits: 9,
            methods: Vec::new(),
            trim: 0.01,
            out: out.into(),
            config_path: None,
        }
    }
}

pub struct SimulationOutput {
    pub lines: Vec<ResultLine>,
    pub summary: Vec<SummaryRow>,
    pub manifest: RunManifest,
}

impl SimulationOutput {
    pub fn failed(&self) -> usize {
        self.lines.iter().filter(|l| l.error.is_some()).count()
    }

    /// Summary row of `method` in `cell`.
    pub fn row(&self, cell: &str, method: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.cell == cell && r.method == method)
    }
}

/// Resolves `baseline` or a case number.
pub fn suite_for(case: &str, seed: u64) -> Result<CaseSuite, CliError> {
    let c = case.trim().to_ascii_lowercase();
    if c == "baseline" {
        return Ok(baseline_suite(seed));
    }
    let id: u32 = c
        .strip_prefix("case")
        .unwrap_or(&c)
        .parse()
        .map_err(|_| CliError::config(format!("unknown case '{case}'; expected 'baseline' or 1 to 11")))?;
    Ok(case_suite(id, seed)?)
}

/// Runs every (cell, replication, method) of a case and writes
/// `results.jsonl`, `summary.csv` and `manifest.json` to `opts.out`.
pub fn run_simulation(opts: &SimulateOptions) -> Result<SimulationOutput, CliError> {
    let mut suite = suite_for(&opts.case, opts.seed)?.restrict_sizes(&opts.sizes);
    if !opts.cells.is_empty() {
        suite.cells.retain(|c| opts.cells.contains(&c.label));
    }
    if suite.cells.is_empty() {
        return Err(CliError::config(format!("no cells of case '{}' match the requested sizes and labels", opts.case)));
    }
    if let Some(r) = opts.reps {
        if r == 0 {
            return Err(CliError::config("--reps must be >= 1"));
        }
        suite.replications = r;
    }
    let methods: Vec<Method> = if opts.methods.is_empty() {
        suite.methods.iter().map(|m| Method::parse(m)).collect::<Result<_, _>>()?
    } else {
        opts.methods.clone()
    };
    suite.methods = methods.iter().map(|m| m.name()).collect();
    if opts.folds < 2 || opts.splits < 1 {
        return Err(CliError::config("--folds must be >= 2 and --splits >= 1"));
    }

    ensure_dir(&opts.out)?;
    let settings = serde_json::to_value(opts).map_err(|e| CliError::config(e.to_string()))?;
    let mut manifest = RunManifest::start("simulate", opts.config_path.clone(), opts.seed, &opts.out, settings);
    manifest.suite = Some(suite.clone());
    manifest.write(&opts.out)?;
    let clock = Instant::now();

    let mut lines = Vec::new();
    for cell in &suite.cells {
        let started = Instant::now();
        let folds = cell.folds.unwrap_or(opts.folds);
        let splits = cell.repetitions.unwrap_or(opts.splits);
        let per_rep: Vec<Vec<ResultLine>> = (0..suite.replications)
            .into_par_iter()
            .map(|rep| {
                let data_seed = replication_seed(cell.spec.seed, rep);
                let line = |method: &Method| ResultLine {
                    case: suite.case.clone(),
                    cell: cell.label.clone(),
                    method: method.name(),
                    rep,
                    truth: cell.spec.beta,
                    data_seed,
                    folds,
                    splits,
                    estimate: None,
                    error: None,
                };
                let dataset = cell.dataset(rep);
                methods
                    .iter()
                    .map(|m| {
                        let mut l = line(m);
                        let settings = Settings {
                            folds,
                            splits,
                            trim: opts.trim,
                            seed: derive_seed(data_seed, 1),
                        };
                        match dataset.as_ref().map_err(|e| e.to_string()).and_then(|(_, d)| {
                            run_method(*m, d, &settings).map_err(|e| e.to_string())
                        }) {
                            Ok((rec, _)) => l.estimate = Some(rec),
                            Err(e) => l.error = Some(e),
                        }
                        l
                    })
                    .collect()
            })
            .collect();
        let cell_lines: Vec<ResultLine> = per_rep.into_iter().flatten().collect();
        let failed: Vec<&ResultLine> = cell_lines.iter().filter(|l| l.error.is_some()).collect();
        let mut failed_methods: Vec<String> = failed.iter().map(|l| l.method.clone()).collect();
        failed_methods.sort();
        failed_methods.dedup();
        log::info!(
            "{} {}: {} estimates, {} failed, {:.1}s",
            suite.case,
            cell.label,
            cell_lines.len(),
            failed.len(),
            started.elapsed().as_secs_f64()
        );
        manifest.cells.push(CellStatus {
            cell: cell.label.clone(),
            total: cell_lines.len(),
            ok: cell_lines.len() - failed.len(),
            failed: failed.len(),
            failed_methods,
        });
        lines.extend(cell_lines);
    }

    let summary = summarize_lines(&lines)?;
    write_jsonl(&opts.out.join("results.jsonl"), &lines)?;
    write_csv(&opts.out.join("summary.csv"), &summary)?;
    let n_failed = lines.iter().filter(|l| l.error.is_some()).count();
    manifest.status = if n_failed == 0 { "completed".into() } else { "partial".into() };
    manifest.wall_clock_seconds = Some(clock.elapsed().as_secs_f64());
    manifest.write(&opts.out)?;
    Ok(SimulationOutput { lines, summary, manifest })
}

/// One summary row per (case, cell, method), in first-appearance order.
pub fn summarize_lines(lines: &[ResultLine]) -> Result<Vec<SummaryRow>, CliError> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultLine>> = BTreeMap::new();
    for l in lines {
        let key = (l.case.clone(), l.cell.clone(), l.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(l);
    }
    let mut rows = Vec::new();
    for key in order {
        let group = &groups[&key];
        let records: Vec<_> = group.iter().filter_map(|l| l.estimate.clone()).collect();
        let n_failed = group.len() - records.len();
        if records.is_empty() {
            continue;
        }
        let thetas: Vec<f64> = records.iter().map(|r| r.theta_hat).collect();
        let ses: Vec<f64> = records.iter().map(|r| r.std_error).collect();
        let s = summarize(&thetas, group[0].truth)?
            .labelled(&key.0, &key.1, &key.2)
            .with_first_stage(&records);
        rows.push(SummaryRow::new(&s, &ses, n_failed));
    }
    Ok(rows)
}
