//! Command-line runner: Monte-Carlo cases, the housing application and
//! report aggregation.

pub mod apply;
pub mod methods;
pub mod output;
pub mod report;
pub mod simulate;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use dml_core::application::RecipeName;
use dml_core::DmlError;

use crate::apply::{run_apply, ApplyOptions};
use crate::methods::Method;
use crate::simulate::{run_simulation, SimulateOptions};

/// Error carrying the process exit code: 1 for configuration and
/// estimation failures, 2 for I/O.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DmlError> for CliError {
    fn from(e: DmlError) -> Self {
        CliError {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

const OUTPUT_HELP: &str = "\
Outputs:
  simulate  results.jsonl  one line per (cell, replication, method): case, cell, method, rep,
                           truth, data_seed, folds, splits, estimate{theta, se, per_fold, mse_w,
                           mse_y, mse_z, n_trimmed, seed} or error
            summary.csv    case, cell, method, n_ok, n_failed, truth, mean, median, q1, q3,
                           bias, mae, median_se, mean_mse_w, mean_mse_y
  apply     table.csv      method, recipe, estimate, se, effect_at_mean_pct, mse_y, mse_w
            results.jsonl  one line per table row with all repetition estimates
  report    report_summary.csv (summary.csv columns) and boxplots.json
  every run manifest.json  settings, seed, version, status and per-cell counts

Exit codes: 0 success, 1 configuration or estimation error, 2 I/O error.";

#[derive(Debug, Parser)]
#[command(name = "dml", version, about = "Double/debiased machine learning simulations and application", after_help = OUTPUT_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo case (1 to 11) or the baseline design.
    Simulate {
        /// Case to run: `baseline`, `1`..`11` or `caseN`.
        case: Option<String>,
        #[arg(long = "case", conflicts_with = "case")]
        case_flag: Option<String>,
        /// Comma-separated sample sizes to keep.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Comma-separated cell labels to keep (e.g. `linear,step`).
        #[arg(long, value_delimiter = ',')]
        cell: Vec<String>,
        /// Monte-Carlo replications per cell.
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimate the housing application table.
    Apply {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Schema JSON; defaults to `housing_schema.json` next to the data.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Covariate recipe applied to every row: hr, raw or flex.
        #[arg(long)]
        recipe: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Merge result files below a directory into summary tables.
    Report {
        dir: PathBuf,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cross-fitting folds K.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Sample-splitting repetitions S.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Comma-separated methods or learners (ols, lasso, spline, rf, gb, mlp, simple_ols, naive_gb, ...).
    #[arg(long, value_delimiter = ',')]
    pub learner: Vec<String>,
    /// Propensity trimming threshold.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file. Flags given on the command line win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<String>,
    pub n: Option<Vec<usize>>,
    pub cell: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub splits: Option<usize>,
    pub learner: Option<Vec<String>>,
    pub trim: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub recipe: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
    }
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, CliError> {
    names.iter().filter(|s| !s.trim().is_empty()).map(|s| Method::parse(s)).collect()
}

fn in_pool<T>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        None => Ok(job()),
        Some(0) => Err(CliError::config("--workers must be >= 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::config(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            case,
            case_flag,
            n,
            cell,
            reps,
            common,
        } => {
            let cfg = match &common.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let case = case
                .or(case_flag)
                .or(cfg.case.clone())
                .ok_or_else(|| CliError::config("simulate needs a case: `baseline` or 1 to 11"))?;
            let out = common.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from(format!("results/{case}")));
            let mut opts = SimulateOptions::new(case, out);
            opts.sizes = if n.is_empty() { cfg.n.clone().unwrap_or_default() } else { n };
            opts.cells = if cell.is_empty() { cfg.cell.clone().unwrap_or_default() } else { cell };
            opts.reps = reps.or(cfg.reps);
            opts.seed = common.seed.or(cfg.seed).unwrap_or(opts.seed);
            opts.folds = common.folds.or(cfg.folds).unwrap_or(opts.folds);
            opts.splits = common.splits.or(cfg.splits).unwrap_or(opts.splits);
            opts.trim = common.trim.or(cfg.trim).unwrap_or(opts.trim);
            let learners = if common.learner.is_empty() { cfg.learner.clone().unwrap_or_default() } else { common.learner.clone() };
            opts.methods = parse_methods(&learners)?;
            opts.config_path = common.config.clone();
            let result = in_pool(common.workers.or(cfg.workers), || run_simulation(&opts))??;
            let failed = result.failed();
            if failed > 0 {
                log::warn!("{failed} of {} estimates failed; see results.jsonl", result.lines.len());
            }
            println!("wrote {} estimates to {}", result.lines.len(), opts.out.display());
            Ok(())
        }
        Command::Apply {
            data,
            schema,
            recipe,
            common,
        } => {
            let cfg = match &common.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let data = data.or(cfg.data.clone()).unwrap_or_else(|| PathBuf::from("data/housing.csv"));
            let schema = schema
                .or(cfg.schema.clone())
                .unwrap_or_else(|| data.with_file_name("housing_schema.json"));
            let out = common.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results/application"));
            let mut opts = ApplyOptions::new(data, schema, out);
            opts.recipe = recipe.or(cfg.recipe.clone()).map(|r| RecipeName::parse(&r)).transpose()?;
            opts.seed = common.seed.or(cfg.seed).unwrap_or(opts.seed);
            opts.folds = common.folds.or(cfg.folds).unwrap_or(opts.folds);
            opts.splits = common.splits.or(cfg.splits).unwrap_or(opts.splits);
            opts.trim = common.trim.or(cfg.trim).unwrap_or(opts.trim);
            let learners = if common.learner.is_empty() { cfg.learner.clone().unwrap_or_default() } else { common.learner.clone() };
            opts.methods = parse_methods(&learners)?;
            opts.config_path = common.config.clone();
            let result = in_pool(common.workers.or(cfg.workers), || run_apply(&opts))??;
            println!("{:<14} {:<5} {:>10} {:>9} {:>8}", "method", "recipe", "estimate", "se", "effect%");
            for r in &result.table {
                println!(
                    "{:<14} {:<5} {:>10.6} {:>9.6} {:>8.3}",
                    r.method, r.recipe, r.estimate, r.se, r.effect_at_mean_pct
                );
            }
            Ok(())
        }
        Command::Report { dir, out } => {
            let out = out.unwrap_or_else(|| dir.clone());
            let result = report::run_report(&dir, &out)?;
            println!(
                "merged {} files into {} summary rows in {}",
                result.files.len(),
                result.summary.len(),
                out.display()
            );
            if result.malformed.is_empty() {
                return Ok(());
            }
            for m in &result.malformed {
                eprintln!("skipped {}:{}: {}", m.file.display(), m.line, m.message);
            }
            Err(CliError::config(format!("{} malformed lines skipped", result.malformed.len())))
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
