//! Cross-fitted estimators for the partially linear model (DML1 and DML2),
//! augmented IPW for binary treatments, the partially linear IV estimator,
//! and the non-orthogonalized benchmarks.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_split, Dataset, SplitPlan};
use crate::error::{DmlError, Result};
use crate::learners::{fit, LearnerSpec};
use crate::linalg::{least_squares, with_intercept};
use crate::metrics::median;
use crate::seeding::derive_seed;

/// Residual treatment variance below this is treated as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Propensity predictions are clipped to `[PROPENSITY_CLIP, 1 - PROPENSITY_CLIP]`.
pub const PROPENSITY_CLIP: f64 = 0.01;
/// Minimum `|sum(vz*vw)|/n` accepted by the IV estimator.
pub const WEAK_INSTRUMENT_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PlrDml1,
    PlrDml2,
    Aipw,
    Pliv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlConfig {
    pub family: Family,
    #[serde(rename = "k")]
    pub folds: usize,
    #[serde(rename = "s")]
    pub repetitions: usize,
    pub treatment_learner: LearnerSpec,
    pub outcome_learner: LearnerSpec,
    #[serde(default)]
    pub instrument_learner: Option<LearnerSpec>,
    #[serde(default = "default_trim")]
    pub trim_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// The IV estimator rejects instruments whose residual first-stage F is below this.
    #[serde(default = "default_min_f")]
    pub min_first_stage_f: f64,
}

fn default_trim() -> f64 {
    0.01
}

fn default_min_f() -> f64 {
    10.0
}

impl DmlConfig {
    /// DML1 with the same learner for treatment and outcome, K=5, S=1.
    pub fn plr(learner: LearnerSpec) -> Self {
        DmlConfig {
            family: Family::PlrDml1,
            folds: 5,
            repetitions: 1,
            treatment_learner: learner.clone(),
            outcome_learner: learner,
            instrument_learner: None,
            trim_threshold: default_trim(),
            seed: 0,
            min_first_stage_f: default_min_f(),
        }
    }

    pub fn with_family(mut self, family: Family) -> Self {
        if family == Family::Pliv && self.instrument_learner.is_none() {
            self.instrument_learner = Some(self.treatment_learner.clone());
        }
        self.family = family;
        self
    }

    pub fn with_folds(mut self, k: usize) -> Self {
        self.folds = k;
        self
    }

    pub fn with_repetitions(mut self, s: usize) -> Self {
        self.repetitions = s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trim(mut self, trim: f64) -> Self {
        self.trim_threshold = trim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(DmlError::config(format!("K must be >= 2, got {}", self.folds)));
        }
        if self.repetitions < 1 {
            return Err(DmlError::config("S must be >= 1"));
        }
        if !(self.trim_threshold >= 0.0 && self.trim_threshold < 0.5) {
            return Err(DmlError::config(format!(
                "trim threshold must lie in [0, 0.5), got {}",
                self.trim_threshold
            )));
        }
        if self.family == Family::Pliv && self.instrument_learner.is_none() {
            return Err(DmlError::config("the IV family requires an instrument learner"));
        }
        self.treatment_learner.validate()?;
        self.outcome_learner.validate()?;
        if let Some(l) = &self.instrument_learner {
            l.validate()?;
        }
        Ok(())
    }
}

/// One estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    #[serde(rename = "theta")]
    pub theta_hat: f64,
    #[serde(rename = "se")]
    pub std_error: f64,
    #[serde(rename = "per_fold")]
    pub per_fold_thetas: Vec<f64>,
    /// Held-out first-stage MSEs; absent for estimators without cross-fitting.
    pub mse_w: Option<f64>,
    pub mse_y: Option<f64>,
    pub mse_z: Option<f64>,
    pub n_trimmed: usize,
    #[serde(rename = "seed")]
    pub repetition_seed: u64,
}

impl EstimateRecord {
    fn plain(theta: f64, se: f64) -> Self {
        EstimateRecord {
            theta_hat: theta,
            std_error: se,
            per_fold_thetas: Vec::new(),
            mse_w: None,
            mse_y: None,
            mse_z: None,
            n_trimmed: 0,
            repetition_seed: 0,
        }
    }
}

/// Median over S repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEstimate {
    pub median_theta: f64,
    pub median_se: f64,
    pub all_records: Vec<EstimateRecord>,
}

impl AggregateEstimate {
    pub fn from_records(records: Vec<EstimateRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(DmlError::Empty("repetition records"));
        }
        let thetas: Vec<f64> = records.iter().map(|r| r.theta_hat).collect();
        let ses: Vec<f64> = records.iter().map(|r| r.std_error).collect();
        Ok(AggregateEstimate {
            median_theta: median(&thetas),
            median_se: median(&ses),
            all_records: records,
        })
    }

    /// Median of each first-stage MSE across repetitions.
    pub fn median_mse(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        let pick = |f: fn(&EstimateRecord) -> Option<f64>| {
            let v: Option<Vec<f64>> = self.all_records.iter().map(f).collect();
            v.map(|v| median(&v))
        };
        (pick(|r| r.mse_w), pick(|r| r.mse_y), pick(|r| r.mse_z))
    }
}

/// Held-out predictions for every row, with the bookkeeping that proves it.
#[derive(Debug, Clone)]
pub struct CrossFitted {
    pub predictions: Vec<f64>,
    /// Fold whose model produced each row's prediction.
    pub predicted_by: Vec<usize>,
    /// Training rows of each fold's model.
    pub training_rows: Vec<Vec<usize>>,
}

fn learner_seed(spec: &LearnerSpec, rep_seed: u64, fold: usize, role: u64) -> u64 {
    derive_seed(derive_seed(rep_seed, spec.tuning_seed), fold as u64 * 8 + role)
}

/// Trains on the other folds and predicts each fold in turn.
pub fn cross_fit(
    x: &Array2<f64>,
    target: &[f64],
    plan: &SplitPlan,
    spec: &LearnerSpec,
    rep_seed: u64,
    role: u64,
) -> Result<CrossFitted> {
    let n = x.nrows();
    let mut predictions = vec![f64::NAN; n];
    let mut predicted_by = vec![usize::MAX; n];
    let mut training_rows = Vec::with_capacity(plan.k());
    for k in 0..plan.k() {
        let train = plan.train_rows(k);
        let test = plan.fold_rows(k);
        let xt = x.select(ndarray::Axis(0), &train);
        let yt: Array1<f64> = train.iter().map(|&i| target[i]).collect();
        let spec_k = spec.clone().with_seed(learner_seed(spec, rep_seed, k, role));
        let fitted = fit(&spec_k, xt.view(), yt.view())?;
        let pred = fitted.model.predict(x.select(ndarray::Axis(0), &test).view())?;
        for (&i, &p) in test.iter().zip(&pred) {
            predictions[i] = p;
            predicted_by[i] = k;
        }
        training_rows.push(train);
    }
    Ok(CrossFitted {
        predictions,
        predicted_by,
        training_rows,
    })
}

/// Cross-fitted residuals of the partially linear model.
#[derive(Debug, Clone)]
pub struct PlrResiduals {
    pub w_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub v_w: Vec<f64>,
    pub v_y: Vec<f64>,
    pub fold: Vec<usize>,
    pub k: usize,
}

impl PlrResiduals {
    fn mse_w(&self) -> f64 {
        mean_sq(&self.v_w)
    }

    fn mse_y(&self) -> f64 {
        mean_sq(&self.v_y)
    }
}

fn mean_sq(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>() / v.len().max(1) as f64
}

fn check_size(d: &Dataset, k: usize) -> Result<()> {
    if d.n_rows() < 2 * k {
        return Err(DmlError::config(format!(
            "cross-fitting with K={k} needs at least {} rows, got {}",
            2 * k,
            d.n_rows()
        )));
    }
    Ok(())
}

/// Residuals `V_W = W - W_hat` and `V_Y = Y - Y_hat` from cross-fitted learners.
pub fn plr_residuals(d: &Dataset, cfg: &DmlConfig, rep_seed: u64) -> Result<PlrResiduals> {
    cfg.validate()?;
    check_size(d, cfg.folds)?;
    let x = d.covariates()?;
    let plan = make_split(d.n_rows(), cfg.folds, rep_seed)?;
    let w = d.treatment();
    let y = d.outcome();
    let w_fit = cross_fit(&x, w, &plan, &cfg.treatment_learner, rep_seed, 0)?;
    let y_fit = cross_fit(&x, y, &plan, &cfg.outcome_learner, rep_seed, 1)?;
    let v_w = w.iter().zip(&w_fit.predictions).map(|(a, b)| a - b).collect();
    let v_y = y.iter().zip(&y_fit.predictions).map(|(a, b)| a - b).collect();
    Ok(PlrResiduals {
        w_hat: w_fit.predictions,
        y_hat: y_fit.predictions,
        v_w,
        v_y,
        fold: plan.assignments().to_vec(),
        k: cfg.folds,
    })
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// No-intercept slope of `v_y` on `v_w`.
fn residual_slope(v_w: &[f64], v_y: &[f64], scope: impl Fn() -> String) -> Result<f64> {
    let var = variance(v_w);
    if !(var >= DEGENERATE_VARIANCE) {
        return Err(DmlError::DegenerateTreatment {
            scope: scope(),
            variance: var,
        });
    }
    let sxy: f64 = v_w.iter().zip(v_y).map(|(a, b)| a * b).sum();
    let sxx: f64 = v_w.iter().map(|a| a * a).sum();
    Ok(sxy / sxx)
}

/// Heteroskedasticity-robust SE of the residual-on-residual slope.
fn sandwich_se(v_w: &[f64], v_y: &[f64], theta: f64) -> f64 {
    let sxx: f64 = v_w.iter().map(|a| a * a).sum();
    let meat: f64 = v_w
        .iter()
        .zip(v_y)
        .map(|(w, y)| {
            let e = y - theta * w;
            w * w * e * e
        })
        .sum();
    meat.sqrt() / sxx
}

fn plr_from_residuals(r: &PlrResiduals, pooled: bool, rep_seed: u64) -> Result<EstimateRecord> {
    let (theta, per_fold) = if pooled {
        let theta = residual_slope(&r.v_w, &r.v_y, || "pooled residuals".into())?;
        (theta, Vec::new())
    } else {
        let mut per_fold = Vec::with_capacity(r.k);
        for k in 0..r.k {
            let (vw, vy): (Vec<f64>, Vec<f64>) = (0..r.v_w.len())
                .filter(|&i| r.fold[i] == k)
                .map(|i| (r.v_w[i], r.v_y[i]))
                .unzip();
            per_fold.push(residual_slope(&vw, &vy, || format!("fold {k}"))?);
        }
        let theta = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
        (theta, per_fold)
    };
    Ok(EstimateRecord {
        theta_hat: theta,
        std_error: sandwich_se(&r.v_w, &r.v_y, theta),
        per_fold_thetas: per_fold,
        mse_w: Some(r.mse_w()),
        mse_y: Some(r.mse_y()),
        mse_z: None,
        n_trimmed: 0,
        repetition_seed: rep_seed,
    })
}

/// DML1: per-fold residual regressions, averaged.
pub fn estimate_plr_dml1(d: &Dataset, cfg: &DmlConfig) -> Result<EstimateRecord> {
    let r = plr_residuals(d, cfg, cfg.seed)?;
    plr_from_residuals(&r, false, cfg.seed)
}

/// DML2: one residual regression on the residuals pooled over folds.
pub fn estimate_plr_dml2(d: &Dataset, cfg: &DmlConfig) -> Result<EstimateRecord> {
    let r = plr_residuals(d, cfg, cfg.seed)?;
    plr_from_residuals(&r, true, cfg.seed)
}

/// Full-sample fit and prediction without sample splitting. Only for oracle tests.
#[cfg(any(test, feature = "test-hooks"))]
pub fn estimate_plr_no_split(d: &Dataset, cfg: &DmlConfig) -> Result<EstimateRecord> {
    let x = d.covariates()?;
    let w = d.treatment();
    let y = d.outcome();
    let predict = |spec: &LearnerSpec, target: &[f64]| -> Result<Vec<f64>> {
        let t = ArrayView1::from(target);
        let m = fit(spec, x.view(), t)?;
        Ok(m.model.predict(x.view())?.to_vec())
    };
    let w_hat = predict(&cfg.treatment_learner, w)?;
    let y_hat = predict(&cfg.outcome_learner, y)?;
    let v_w: Vec<f64> = w.iter().zip(&w_hat).map(|(a, b)| a - b).collect();
    let v_y: Vec<f64> = y.iter().zip(&y_hat).map(|(a, b)| a - b).collect();
    let theta = residual_slope(&v_w, &v_y, || "full sample".into())?;
    Ok(EstimateRecord {
        theta_hat: theta,
        std_error: sandwich_se(&v_w, &v_y, theta),
        per_fold_thetas: Vec::new(),
        mse_w: Some(mean_sq(&v_w)),
        mse_y: Some(mean_sq(&v_y)),
        mse_z: None,
        n_trimmed: 0,
        repetition_seed: cfg.seed,
    })
}

fn check_binary(w: &[f64]) -> Result<()> {
    match w.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        Some((row, &value)) => Err(DmlError::NonBinaryTreatment { row, value }),
        None => Ok(()),
    }
}

/// AIPW score average over rows whose propensity lies in `[trim, 1 - trim]`.
///
/// Returns `(ate, se, n_trimmed)`.
pub fn aipw_from_predictions(
    y: &[f64],
    w: &[f64],
    mu1: &[f64],
    mu0: &[f64],
    e: &[f64],
    trim: f64,
) -> Result<(f64, f64, usize)> {
    let n = y.len();
    for (name, len) in [("w", w.len()), ("mu1", mu1.len()), ("mu0", mu0.len()), ("e", e.len())] {
        if len != n {
            return Err(DmlError::Shape {
                context: match name {
                    "w" => "aipw treatment length",
                    "mu1" => "aipw mu1 length",
                    "mu0" => "aipw mu0 length",
                    _ => "aipw propensity length",
                },
                expected: n,
                found: len,
            });
        }
    }
    let scores: Vec<f64> = (0..n)
        .filter(|&i| e[i] >= trim && e[i] <= 1.0 - trim)
        .map(|i| {
            mu1[i] - mu0[i] + w[i] * (y[i] - mu1[i]) / e[i]
                - (1.0 - w[i]) * (y[i] - mu0[i]) / (1.0 - e[i])
        })
        .collect();
    let m = scores.len();
    if m == 0 {
        return Err(DmlError::AllTrimmed { n, threshold: trim });
    }
    let ate = scores.iter().sum::<f64>() / m as f64;
    let se = if m > 1 {
        let var = scores.iter().map(|s| (s - ate) * (s - ate)).sum::<f64>() / (m - 1) as f64;
        var.sqrt() / (m as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok((ate, se, n - m))
}

/// Cross-fitted augmented inverse-propensity-weighted ATE for a binary treatment.
pub fn estimate_aipw(d: &Dataset, cfg: &DmlConfig) -> Result<EstimateRecord> {
    cfg.validate()?;
    check_size(d, cfg.folds)?;
    let w = d.treatment();
    let y = d.outcome();
    check_binary(w)?;
    let x = d.covariates()?;
    let n = d.n_rows();
    let plan = make_split(n, cfg.folds, cfg.seed)?;

    let mut mu1 = vec![0.0; n];
    let mut mu0 = vec![0.0; n];
    for k in 0..plan.k() {
        let train = plan.train_rows(k);
        let test = plan.fold_rows(k);
        let x_test = x.select(ndarray::Axis(0), &test);
        for (arm, out) in [(1u8, &mut mu1), (0u8, &mut mu0)] {
            let rows: Vec<usize> = train.iter().copied().filter(|&i| w[i] == f64::from(arm)).collect();
            if rows.is_empty() {
                return Err(DmlError::ArmSupport { fold: k, arm });
            }
            let xt = x.select(ndarray::Axis(0), &rows);
            let yt: Array1<f64> = rows.iter().map(|&i| y[i]).collect();
            let spec = cfg
                .outcome_learner
                .clone()
                .with_seed(learner_seed(&cfg.outcome_learner, cfg.seed, k, 2 + u64::from(arm)));
            let m = fit(&spec, xt.view(), yt.view())?;
            for (&i, &p) in test.iter().zip(&m.model.predict(x_test.view())?) {
                out[i] = p;
            }
        }
    }
    let e_fit = cross_fit(&x, w, &plan, &cfg.treatment_learner, cfg.seed, 0)?;
    let e: Vec<f64> = e_fit
        .predictions
        .iter()
        .map(|p| p.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP))
        .collect();
    let (ate, se, n_trimmed) = aipw_from_predictions(y, w, &mu1, &mu0, &e, cfg.trim_threshold)?;
    let mse_w = (0..n).map(|i| (w[i] - e[i]).powi(2)).sum::<f64>() / n as f64;
    let mse_y = (0..n)
        .map(|i| (y[i] - if w[i] == 1.0 { mu1[i] } else { mu0[i] }).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(EstimateRecord {
        theta_hat: ate,
        std_error: se,
        per_fold_thetas: Vec::new(),
        mse_w: Some(mse_w),
        mse_y: Some(mse_y),
        mse_z: None,
        n_trimmed,
        repetition_seed: cfg.seed,
    })
}

/// IV ratio `sum(vz*vy) / sum(vz*vw)` with the weak-instrument checks.
///
/// Returns `(theta, se, first_stage_f)`.
pub fn pliv_from_residuals(
    v_y: &[f64],
    v_w: &[f64],
    v_z: &[f64],
    min_first_stage_f: f64,
) -> Result<(f64, f64, f64)> {
    let n = v_y.len() as f64;
    let szw: f64 = v_z.iter().zip(v_w).map(|(a, b)| a * b).sum();
    let szy: f64 = v_z.iter().zip(v_y).map(|(a, b)| a * b).sum();
    let szz: f64 = v_z.iter().map(|a| a * a).sum();
    let sww: f64 = v_w.iter().map(|a| a * a).sum();
    let rho2 = if szz > 0.0 && sww > 0.0 {
        (szw * szw / (szz * sww)).min(1.0)
    } else {
        0.0
    };
    let f_stat = if rho2 >= 1.0 {
        f64::INFINITY
    } else {
        n * rho2 / (1.0 - rho2)
    };
    if szw.abs() / n < WEAK_INSTRUMENT_DENOMINATOR || f_stat < min_first_stage_f {
        return Err(DmlError::WeakInstrument {
            denominator: szw.abs() / n,
            first_stage_f: f_stat,
        });
    }
    let theta = szy / szw;
    let meat: f64 = (0..v_y.len())
        .map(|i| {
            let e = v_y[i] - theta * v_w[i];
            v_z[i] * v_z[i] * e * e
        })
        .sum();
    Ok((theta, meat.sqrt() / szw.abs(), f_stat))
}

/// Partially linear IV with cross-fitted nuisance functions for Y, W and Z.
pub fn estimate_pliv(d: &Dataset, cfg: &DmlConfig) -> Result<EstimateRecord> {
    cfg.validate()?;
    let z = d
        .instrument()
        .ok_or_else(|| DmlError::Role("the IV family needs an instrument column".into()))?;
    let z_learner = cfg
        .instrument_learner
        .as_ref()
        .ok_or_else(|| DmlError::config("the IV family requires an instrument learner"))?;
    let r = plr_residuals(d, cfg, cfg.seed)?;
    let x = d.covariates()?;
    let plan = make_split(d.n_rows(), cfg.folds, cfg.seed)?;
    let z_fit = cross_fit(&x, z, &plan, z_learner, cfg.seed, 4)?;
    let v_z: Vec<f64> = z.iter().zip(&z_fit.predictions).map(|(a, b)| a - b).collect();
    let (theta, se, _) = pliv_from_residuals(&r.v_y, &r.v_w, &v_z, cfg.min_first_stage_f)?;
    Ok(EstimateRecord {
        theta_hat: theta,
        std_error: se,
        per_fold_thetas: Vec::new(),
        mse_w: Some(r.mse_w()),
        mse_y: Some(r.mse_y()),
        mse_z: Some(mean_sq(&v_z)),
        n_trimmed: 0,
        repetition_seed: cfg.seed,
    })
}

/// Runs the configured family once with `cfg.seed`.
pub fn estimate(d: &Dataset, cfg: &DmlConfig) -> Result<EstimateRecord> {
    match cfg.family {
        Family::PlrDml1 => estimate_plr_dml1(d, cfg),
        Family::PlrDml2 => estimate_plr_dml2(d, cfg),
        Family::Aipw => estimate_aipw(d, cfg),
        Family::Pliv => estimate_pliv(d, cfg),
    }
}

/// Seed of repetition `s` derived from the configured base seed.
pub fn repetition_seed(base: u64, s: usize) -> u64 {
    derive_seed(base, s as u64)
}

/// Repeats the estimator S times on fresh splits and reports medians. The
/// result does not depend on how repetitions are scheduled.
pub fn repeat_median(d: &Dataset, cfg: &DmlConfig) -> Result<AggregateEstimate> {
    cfg.validate()?;
    let results: Vec<Result<EstimateRecord>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|s| {
            let mut c = cfg.clone();
            c.seed = repetition_seed(cfg.seed, s);
            estimate(d, &c)
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        records.push(r.map_err(|e| DmlError::Repetition {
            index,
            source: Box::new(e),
        })?);
    }
    AggregateEstimate::from_records(records)
}

/// Slope of Y on W (with intercept) and its classical SE.
pub fn estimate_simple_ols(d: &Dataset) -> Result<EstimateRecord> {
    let w = d.treatment();
    let var = variance(w);
    if !(var >= DEGENERATE_VARIANCE) {
        return Err(DmlError::DegenerateTreatment {
            scope: "treatment column".into(),
            variance: var,
        });
    }
    let design = Array2::from_shape_fn((d.n_rows(), 2), |(i, j)| if j == 0 { 1.0 } else { w[i] });
    let ls = least_squares(design.view(), ArrayView1::from(d.outcome()))?;
    Ok(EstimateRecord::plain(ls.coef[1], ls.classical_se(1)))
}

/// Coefficient on W from regressing Y on (1, W, X) and its classical SE.
pub fn estimate_ols_adjusted(d: &Dataset) -> Result<EstimateRecord> {
    let x = d.covariates()?;
    let n = d.n_rows();
    let w = d.treatment();
    let mut design = Array2::zeros((n, x.ncols() + 1));
    design.column_mut(0).assign(&ArrayView1::from(w));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let design = with_intercept(design.view());
    let ls = least_squares(design.view(), ArrayView1::from(d.outcome()))?;
    Ok(EstimateRecord::plain(ls.coef[1], ls.classical_se(1)))
}

/// Naive plug-in estimator without orthogonalization or cross-fitting:
/// an initial slope from Y on W, a learner for `Y - beta*W` on X using all
/// rows, and a final regression of `Y - g(X)` on W.
pub fn estimate_naive_ml(d: &Dataset, outcome_learner: &LearnerSpec) -> Result<EstimateRecord> {
    let initial = estimate_simple_ols(d)?.theta_hat;
    let x = d.covariates()?;
    let w = d.treatment();
    let y = d.outcome();
    let partial: Array1<f64> = y.iter().zip(w).map(|(a, b)| a - initial * b).collect();
    let g = fit(outcome_learner, x.view(), partial.view())?;
    let g_hat = g.model.predict(x.view())?;
    let adjusted: Vec<f64> = y.iter().zip(&g_hat).map(|(a, b)| a - b).collect();
    let design = Array2::from_shape_fn((d.n_rows(), 2), |(i, j)| if j == 0 { 1.0 } else { w[i] });
    let ls = least_squares(design.view(), ArrayView1::from(&adjusted))?;
    Ok(EstimateRecord::plain(ls.coef[1], ls.classical_se(1)))
}

/// First-stage held-out MSEs `(mse_w, mse_y, mse_z)` stored on a record.
pub fn first_stage_report(r: &EstimateRecord) -> (Option<f64>, Option<f64>, Option<f64>) {
    (r.mse_w, r.mse_y, r.mse_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnRole};
    use crate::learners::LearnerKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn linear_dataset(seed: u64, n: usize, confounding: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        let mut w = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let wi = confounding * (a - 0.5 * b) + rng.sample::<f64, _>(StandardNormal);
            let yi = 1.0 * wi + confounding * (0.7 * a + b) + rng.sample::<f64, _>(StandardNormal);
            x1.push(a);
            x2.push(b);
            w.push(wi);
            y.push(yi);
        }
        Dataset::new(vec![
            Column::new("y", y, ColumnRole::Outcome),
            Column::new("w", w, ColumnRole::Treatment),
            Column::new("x1", x1, ColumnRole::Covariate),
            Column::new("x2", x2, ColumnRole::Covariate),
        ])
        .unwrap()
    }

    fn ols_cfg() -> DmlConfig {
        DmlConfig::plr(LearnerSpec::ols())
    }

    #[test]
    fn unconfounded_linear_model_recovers_beta() {
        let d = linear_dataset(1, 5000, 0.0);
        let r = estimate_plr_dml1(&d, &ols_cfg().with_seed(3)).unwrap();
        assert!((r.theta_hat - 1.0).abs() < 3.0 * r.std_error);
        assert_eq!(r.per_fold_thetas.len(), 5);
        let mean = r.per_fold_thetas.iter().sum::<f64>() / 5.0;
        assert_eq!(r.theta_hat, mean);
    }

    #[test]
    fn no_split_matches_frisch_waugh() {
        let d = linear_dataset(2, 300, 1.0);
        let r = estimate_plr_no_split(&d, &ols_cfg()).unwrap();
        let ols = estimate_ols_adjusted(&d).unwrap();
        assert!((r.theta_hat - ols.theta_hat).abs() < 1e-8);
    }

    #[test]
    fn residuals_are_value_minus_prediction_bitwise() {
        let d = linear_dataset(3, 100, 1.0);
        let r = plr_residuals(&d, &ols_cfg(), 5).unwrap();
        for i in 0..100 {
            assert_eq!(r.v_w[i].to_bits(), (d.treatment()[i] - r.w_hat[i]).to_bits());
            assert_eq!(r.v_y[i].to_bits(), (d.outcome()[i] - r.y_hat[i]).to_bits());
        }
    }

    #[test]
    fn cross_fit_never_predicts_a_training_row() {
        let d = linear_dataset(4, 53, 1.0);
        let x = d.covariates().unwrap();
        let plan = make_split(53, 4, 9).unwrap();
        let cf = cross_fit(&x, d.outcome(), &plan, &LearnerSpec::ols(), 9, 1).unwrap();
        for i in 0..53 {
            let k = cf.predicted_by[i];
            assert!(k < 4);
            assert!(!cf.training_rows[k].contains(&i));
            assert!(cf.predictions[i].is_finite());
        }
    }

    #[test]
    fn duplicated_halves_make_dml1_equal_dml2() {
        // Two folds holding identical rows give identical per-fold regressions.
        let base = linear_dataset(5, 40, 1.0);
        let plan = make_split(80, 2, 11).unwrap();
        let mut order = vec![0usize; 80];
        let (mut a, mut b) = (0, 0);
        for (row, &f) in plan.assignments().iter().enumerate() {
            if f == 0 {
                order[row] = a;
                a += 1;
            } else {
                order[row] = b;
                b += 1;
            }
        }
        let d = base.select_rows(&order).unwrap();
        let cfg = ols_cfg().with_folds(2).with_seed(11);
        let r = plr_residuals(&d, &cfg, 11).unwrap();
        let dml1 = plr_from_residuals(&r, false, 11).unwrap();
        let dml2 = plr_from_residuals(&r, true, 11).unwrap();
        assert!((dml1.per_fold_thetas[0] - dml1.per_fold_thetas[1]).abs() < 1e-10);
        assert!((dml1.theta_hat - dml2.theta_hat).abs() < 1e-10);
    }

    #[test]
    fn degenerate_treatment_is_reported() {
        let d = linear_dataset(6, 60, 1.0);
        let x1 = d.column("x1").unwrap().values.clone();
        let d = d
            .with_column(Column::new("w", x1, ColumnRole::Treatment))
            .unwrap();
        for family in [Family::PlrDml1, Family::PlrDml2] {
            let err = estimate(&d, &ols_cfg().with_family(family)).unwrap_err();
            assert!(matches!(err, DmlError::DegenerateTreatment { .. }), "{err}");
        }
    }

    #[test]
    fn scale_equivariance_with_ols_learners() {
        let d = linear_dataset(7, 200, 1.0);
        let base = estimate_plr_dml1(&d, &ols_cfg()).unwrap();
        for c in [2.0, 0.5, -4.0] {
            let y: Vec<f64> = d.outcome().iter().map(|v| v * c).collect();
            let scaled = d.with_column(Column::new("y", y, ColumnRole::Outcome)).unwrap();
            let r = estimate_plr_dml1(&scaled, &ols_cfg()).unwrap();
            assert_eq!(r.theta_hat, c * base.theta_hat);
        }
        let y: Vec<f64> = d.outcome().iter().map(|v| v * 3.0).collect();
        let scaled = d.with_column(Column::new("y", y, ColumnRole::Outcome)).unwrap();
        let r = estimate_plr_dml1(&scaled, &ols_cfg()).unwrap();
        assert!((r.theta_hat - 3.0 * base.theta_hat).abs() < 1e-12 * base.theta_hat.abs().max(1.0));
    }

    #[test]
    fn repetitions_single_and_errors() {
        let d = linear_dataset(8, 100, 1.0);
        let agg = repeat_median(&d, &ols_cfg().with_seed(2)).unwrap();
        assert_eq!(agg.all_records.len(), 1);
        assert_eq!(agg.median_theta, agg.all_records[0].theta_hat);
        assert_eq!(agg.all_records[0].repetition_seed, repetition_seed(2, 0));

        let tiny = d.select_rows(&(0..7).collect::<Vec<_>>()).unwrap();
        let err = repeat_median(&tiny, &ols_cfg().with_repetitions(3)).unwrap_err();
        assert!(matches!(err, DmlError::InvalidConfig(_)) || matches!(err, DmlError::Repetition { .. }));
    }

    #[test]
    fn median_of_three_is_robust() {
        let rec = |t: f64| EstimateRecord::plain(t, t / 10.0);
        let agg = AggregateEstimate::from_records(vec![rec(1.0), rec(100.0), rec(2.0)]).unwrap();
        assert_eq!(agg.median_theta, 2.0);
    }

    #[test]
    fn simple_ols_edge_cases() {
        let d = linear_dataset(9, 50, 0.0);
        let zeros = d
            .with_column(Column::new("y", vec![0.0; 50], ColumnRole::Outcome))
            .unwrap();
        assert_eq!(estimate_simple_ols(&zeros).unwrap().theta_hat, 0.0);
        let flat = d
            .with_column(Column::new("w", vec![1.0; 50], ColumnRole::Treatment))
            .unwrap();
        assert!(estimate_simple_ols(&flat).is_err());
    }

    #[test]
    fn naive_with_zero_learner_reduces_to_simple_ols() {
        // A lasso at lambda_max predicts only the intercept; with X
        // independent of the target the final slope equals simple OLS.
        let d = linear_dataset(10, 400, 0.0);
        let mut spec = LearnerSpec::default_for(LearnerKind::Lasso);
        if let crate::learners::LearnerParams::Lasso(p) = &mut spec.params {
            p.lambda = Some(1e9);
        }
        let naive = estimate_naive_ml(&d, &spec).unwrap();
        let simple = estimate_simple_ols(&d).unwrap();
        assert!((naive.theta_hat - simple.theta_hat).abs() < 1e-10);
    }

    #[test]
    fn aipw_oracle_inputs_give_mean_effect_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 64;
        let mu1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let mu0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let w: Vec<f64> = (0..n).map(|i| f64::from(rng.random_bool(e[i]))).collect();
        let y: Vec<f64> = (0..n).map(|i| if w[i] == 1.0 { mu1[i] } else { mu0[i] }).collect();
        let (ate, _, trimmed) = aipw_from_predictions(&y, &w, &mu1, &mu0, &e, 0.01).unwrap();
        let oracle = (0..n).map(|i| mu1[i] - mu0[i]).sum::<f64>() / n as f64;
        assert_eq!(trimmed, 0);
        assert!((ate - oracle).abs() < 1e-14);
    }

    #[test]
    fn aipw_reduces_to_ipw() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 50;
        let w: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let zeros = vec![0.0; n];
        let half = vec![0.5; n];
        let (ate, _, _) = aipw_from_predictions(&y, &w, &zeros, &zeros, &half, 0.01).unwrap();
        let ipw = (0..n).map(|i| 2.0 * w[i] * y[i] - 2.0 * (1.0 - w[i]) * y[i]).sum::<f64>() / n as f64;
        assert!((ate - ipw).abs() < 1e-14);
    }

    #[test]
    fn trimming_counts_and_empties() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 0.0, 1.0, 0.0];
        let mu = [0.0; 4];
        let e = [0.05, 0.5, 0.96, 0.5];
        let (_, _, trimmed) = aipw_from_predictions(&y, &w, &mu, &mu, &e, 0.1).unwrap();
        assert_eq!(trimmed, 2);
        let err = aipw_from_predictions(&y, &w, &mu, &mu, &[0.01; 4], 0.1).unwrap_err();
        assert!(matches!(err, DmlError::AllTrimmed { n: 4, .. }));
    }

    #[test]
    fn aipw_rejects_non_binary_and_empty_arms() {
        let d = linear_dataset(14, 40, 0.0);
        let err = estimate_aipw(&d, &ols_cfg().with_family(Family::Aipw)).unwrap_err();
        assert!(matches!(err, DmlError::NonBinaryTreatment { row: 0, .. }));
        let ones = d
            .with_column(Column::new("w", vec![1.0; 40], ColumnRole::Treatment))
            .unwrap();
        let err = estimate_aipw(&ones, &ols_cfg().with_family(Family::Aipw)).unwrap_err();
        assert!(matches!(err, DmlError::ArmSupport { arm: 0, .. }));
    }

    #[test]
    fn pliv_ratio_matches_hand_computation() {
        let vy = [1.0, -2.0, 0.5, 3.0];
        let vw = [0.5, -1.0, 1.0, 2.0];
        let vz = [1.0, -1.0, 0.5, 1.5];
        let (theta, _, _) = pliv_from_residuals(&vy, &vw, &vz, 0.0).unwrap();
        let num = 1.0 * 1.0 + 2.0 + 0.25 + 4.5;
        let den = 0.5 + 1.0 + 0.5 + 3.0;
        assert!((theta - num / den).abs() < 1e-15);
    }

    #[test]
    fn pliv_with_treatment_as_instrument_matches_dml2() {
        let d = linear_dataset(15, 300, 1.0);
        let w = d.treatment().to_vec();
        let d = d.with_column(Column::new("z", w, ColumnRole::Instrument)).unwrap();
        let cfg = ols_cfg().with_seed(4);
        let iv = estimate_pliv(&d, &cfg.clone().with_family(Family::Pliv)).unwrap();
        let dml2 = estimate_plr_dml2(&d, &cfg).unwrap();
        assert!((iv.theta_hat - dml2.theta_hat).abs() < 1e-10);
        assert!(iv.mse_z.is_some());
    }

    #[test]
    fn pliv_rejects_independent_instrument() {
        let d = linear_dataset(16, 500, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let z: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let d = d.with_column(Column::new("z", z, ColumnRole::Instrument)).unwrap();
        let err = estimate_pliv(&d, &ols_cfg().with_family(Family::Pliv)).unwrap_err();
        assert!(matches!(err, DmlError::WeakInstrument { .. }), "{err}");
    }

    #[test]
    fn pliv_requires_instrument() {
        let d = linear_dataset(17, 100, 1.0);
        let err = estimate_pliv(&d, &ols_cfg().with_family(Family::Pliv)).unwrap_err();
        assert!(matches!(err, DmlError::Role(_)));
        let mut cfg = ols_cfg();
        cfg.family = Family::Pliv;
        assert!(matches!(cfg.validate(), Err(DmlError::InvalidConfig(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = DmlConfig::plr(LearnerSpec::default_for(LearnerKind::GradientBoost))
            .with_repetitions(9)
            .with_seed(42);
        let json = serde_json::to_value(&cfg).unwrap();
        assert_eq!(json["k"], 5);
        assert_eq!(json["s"], 9);
        let back: DmlConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn record_json_field_names() {
        let d = linear_dataset(18, 60, 1.0);
        let r = estimate_plr_dml1(&d, &ols_cfg()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["theta", "se", "per_fold", "mse_w", "mse_y", "mse_z", "n_trimmed", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(first_stage_report(&r), (r.mse_w, r.mse_y, None));
    }
}
