use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use dml_core::application::{apply_recipe, column_mean, load_housing, RecipeName, SpecRecipe};
use dml_core::metrics::{effect_at_mean, predictiveness_table};
use dml_core::{EstimateRecord, LearnerKind};

use crate::methods::{run_method, Method, Settings};
use crate::output::{ensure_dir, write_csv, write_jsonl, CellStatus, RunManifest};
use crate::CliError;

/// Default rows of the application table with their covariate recipes.
pub const TABLE_ROWS: [(Method, RecipeName); 13] = [
    (Method::Ols, RecipeName::Hr),
    (Method::SimpleOls, RecipeName::Raw),
    (Method::NaiveGb, RecipeName::Raw),
    (Method::Ols, RecipeName::Raw),
    (Method::Ols, RecipeName::Flex),
    (Method::Dml(LearnerKind::Ols), RecipeName::Flex),
    (Method::Dml(LearnerKind::Ols), RecipeName::Raw),
    (Method::Dml(LearnerKind::Ols), RecipeName::Hr),
    (Method::Dml(LearnerKind::SplineAdditive), RecipeName::Raw),
    (Method::Dml(LearnerKind::Mlp), RecipeName::Raw),
    (Method::Dml(LearnerKind::Lasso), RecipeName::Flex),
    (Method::Dml(LearnerKind::GradientBoost), RecipeName::Raw),
    (Method::Dml(LearnerKind::RandomForest), RecipeName::Raw),
];

#[derive(Debug, Clone, Serialize)]
pub struct ApplyOptions {
    pub data: PathBuf,
    pub schema: PathBuf,
    /// Overrides the recipe of every row.
    pub recipe: Option<RecipeName>,
    /// Keeps only rows of these methods; empty keeps the full table.
    #[serde(skip)]
    pub methods: Vec<Method>,
    pub folds: usize,
    pub splits: usize,
    pub seed: u64,
    pub trim: f64,
    pub out: PathBuf,
    pub config_path: Option<PathBuf>,
}

impl ApplyOptions {
    pub fn new(data: impl Into<PathBuf>, schema: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        ApplyOptions {
            data: data.into(),
            schema: schema.into(),
            recipe: None,
            methods: Vec::new(),
            folds: 5,
            splits: 199,
            seed: 42,
            trim: 0.01,
            out: out.into(),
            config_path: None,
        }
    }
}

/// One row of `table.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub recipe: String,
    pub estimate: f64,
    pub se: f64,
    pub effect_at_mean_pct: f64,
    pub mse_y: Option<f64>,
    pub mse_w: Option<f64>,
}

/// One line of the application's `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyLine {
    pub method: String,
    pub recipe: String,
    pub estimate: EstimateRecord,
    /// Estimates of the individual repetitions, for cross-fitted methods.
    pub repetition_thetas: Vec<f64>,
}

pub struct ApplyOutput {
    pub table: Vec<TableRow>,
    pub lines: Vec<ApplyLine>,
    pub mean_treatment_level: f64,
}

impl ApplyOutput {
    pub fn row(&self, method: &str, recipe: &str) -> Option<&TableRow> {
        self.table.iter().find(|r| r.method == method && r.recipe == recipe)
    }
}

/// Runs the application table and writes `table.csv`, `results.jsonl` and
/// `manifest.json`. Non-cross-fitted rows come first in their fixed order,
/// followed by cross-fitted rows in descending order of outcome MSE.
pub fn run_apply(opts: &ApplyOptions) -> Result<ApplyOutput, CliError> {
    if opts.folds < 2 || opts.splits < 1 {
        return Err(CliError::config("--folds must be >= 2 and --splits >= 1"));
    }
    let raw = load_housing(&opts.data, &opts.schema)?;
    let mean_level = column_mean(&raw, "nox")?;
    let rows: Vec<(Method, RecipeName)> = TABLE_ROWS
        .iter()
        .filter(|(m, _)| opts.methods.is_empty() || opts.methods.contains(m))
        .map(|&(m, r)| (m, opts.recipe.unwrap_or(r)))
        .fold(Vec::new(), |mut acc, row| {
            if !acc.contains(&row) {
                acc.push(row);
            }
            acc
        });
    if rows.is_empty() {
        return Err(CliError::config("no application rows match the requested learners"));
    }

    ensure_dir(&opts.out)?;
    let settings = serde_json::to_value(opts).map_err(|e| CliError::config(e.to_string()))?;
    let mut manifest = RunManifest::start("apply", opts.config_path.clone(), opts.seed, &opts.out, settings);
    manifest.write(&opts.out)?;
    let clock = Instant::now();

    let settings = Settings {
        folds: opts.folds,
        splits: opts.splits,
        trim: opts.trim,
        seed: opts.seed,
    };
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (method, recipe) in rows {
        let started = Instant::now();
        let d = apply_recipe(&raw, &SpecRecipe::new(recipe))?;
        let (rec, agg) = run_method(method, &d, &settings)?;
        log::info!("{} ({}): {:.5} in {:.1}s", method.name(), recipe.as_str(), rec.theta_hat, started.elapsed().as_secs_f64());
        let label = format!("{}|{}", method.name(), recipe.as_str());
        manifest.cells.push(CellStatus {
            cell: label.clone(),
            total: 1,
            ok: 1,
            failed: 0,
            failed_methods: Vec::new(),
        });
        lines.push(ApplyLine {
            method: method.name(),
            recipe: recipe.as_str().into(),
            estimate: rec.clone(),
            repetition_thetas: agg.map(|a| a.all_records.iter().map(|r| r.theta_hat).collect()).unwrap_or_default(),
        });
        records.push((label, rec));
    }

    let table: Vec<TableRow> = predictiveness_table(&records, None)
        .into_iter()
        .map(|r| {
            let (method, recipe) = r.method.split_once('|').expect("labels carry a recipe");
            TableRow {
                method: method.to_string(),
                recipe: recipe.to_string(),
                estimate: r.estimate,
                se: r.se,
                effect_at_mean_pct: effect_at_mean(r.estimate, mean_level),
                mse_y: r.mse_y,
                mse_w: r.mse_w,
            }
        })
        .collect();
    write_csv(&opts.out.join("table.csv"), &table)?;
    write_jsonl(&opts.out.join("results.jsonl"), &lines)?;
    manifest.status = "completed".into();
    manifest.wall_clock_seconds = Some(clock.elapsed().as_secs_f64());
    manifest.write(&opts.out)?;
    Ok(ApplyOutput {
        table,
        lines,
        mean_treatment_level: mean_level,
    })
}
