use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::{mean, mse, take, take_rows, tuning_folds, TuningReport};
use crate::error::{DmlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoParams {
    /// Fixed penalty; when absent the penalty is chosen by cross-validation.
    pub lambda: Option<f64>,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub folds: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            lambda: None,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            folds: 10,
            tol: 1e-9,
            max_sweeps: 10_000,
        }
    }
}

impl LassoParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(DmlError::config(format!("lasso lambda must be >= 0, got {l}")));
            }
        }
        if self.n_lambda < 1 {
            return Err(DmlError::config("lasso n_lambda must be >= 1"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(DmlError::config("lasso lambda_min_ratio must lie in (0, 1)"));
        }
        if self.folds < 2 {
            return Err(DmlError::config("lasso folds must be >= 2"));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(DmlError::config("lasso tol must be > 0 and max_sweeps >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    /// Coefficients on the original feature scale.
    pub coef: Array1<f64>,
    pub lambda: f64,
}

impl LassoModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.coef) + self.intercept
    }
}

/// Outcome of one coordinate-descent solve.
#[derive(Debug, Clone)]
pub struct CdOutcome {
    pub sweeps: usize,
    pub converged: bool,
    /// Objective `b'Gb/2 - c'b + lambda*|b|_1` after every sweep, when tracked.
    pub objectives: Vec<f64>,
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

fn objective(gram: &Array2<f64>, c: &Array1<f64>, b: &Array1<f64>, lambda: f64) -> f64 {
    0.5 * b.dot(&gram.dot(b)) - c.dot(b) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Covariance-update coordinate descent for
/// `min (1/2n)||y - Xb||^2 + lambda*|b|_1`, written in terms of
/// `gram = X'X/n` and `c = X'y/n`. `beta` is used as the warm start and
/// overwritten with the solution.
pub fn coordinate_descent(
    gram: &Array2<f64>,
    c: &Array1<f64>,
    lambda: f64,
    beta: &mut Array1<f64>,
    tol: f64,
    max_sweeps: usize,
    track: bool,
) -> CdOutcome {
    let p = c.len();
    let mut grad = c - &gram.dot(&*beta);
    let mut objectives = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[[j, j]];
            if gjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(grad[j] + gjj * old, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                for k in 0..p {
                    grad[k] -= gram[[k, j]] * delta;
                }
                max_delta = max_delta.max(delta.abs() * gjj.sqrt());
            }
        }
        if track {
            objectives.push(objective(gram, c, beta, lambda));
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    CdOutcome {
        sweeps,
        converged,
        objectives,
    }
}

/// Standardized problem on the active (non-constant) columns.
struct Prepared {
    std: Standardizer,
    active: Vec<usize>,
    gram: Array2<f64>,
    c: Array1<f64>,
    y_mean: f64,
}

fn prepare(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Prepared {
    let n = x.nrows() as f64;
    let std = Standardizer::fit(x);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| std.active[j]).collect();
    let z = std.transform(x).select(ndarray::Axis(1), &active);
    let y_mean = mean(y);
    let yc = y.mapv(|v| v - y_mean);
    let gram = z.t().dot(&z) / n;
    let c = z.t().dot(&yc) / n;
    Prepared {
        std,
        active,
        gram,
        c,
        y_mean,
    }
}

impl Prepared {
    fn lambda_max(&self) -> f64 {
        self.c.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    fn model(&self, beta: &Array1<f64>, p: usize, lambda: f64) -> LassoModel {
        let mut coef = Array1::zeros(p);
        let mut intercept = self.y_mean;
        for (k, &j) in self.active.iter().enumerate() {
            coef[j] = beta[k] / self.std.sd[j];
            intercept -= coef[j] * self.std.mean[j];
        }
        LassoModel {
            intercept,
            coef,
            lambda,
        }
    }
}

/// `max_j |z_j' (y - ybar)| / n` on internally standardized features.
pub fn lambda_max(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    prepare(x, y).lambda_max()
}

fn grid(lmax: f64, params: &LassoParams) -> Vec<f64> {
    let m = params.n_lambda;
    if m == 1 {
        return vec![lmax];
    }
    let log_ratio = params.lambda_min_ratio.ln();
    (0..m)
        .map(|i| lmax * (log_ratio * i as f64 / (m - 1) as f64).exp())
        .collect()
}

/// Lasso with internal standardization. With a fixed `lambda` no tuning is
/// done; otherwise the penalty minimizing K-fold CV error on a log grid from
/// `lambda_max` downward is used.
pub fn fit_lasso(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &LassoParams,
    seed: u64,
) -> Result<(LassoModel, Option<TuningReport>)> {
    let p = x.ncols();
    let prep = prepare(x, y);
    if prep.active.len() < p {
        log::warn!(
            "lasso: {} zero-variance feature(s) excluded",
            p - prep.active.len()
        );
    }
    let q = prep.active.len();

    if let Some(lambda) = params.lambda {
        let mut beta = Array1::zeros(q);
        coordinate_descent(&prep.gram, &prep.c, lambda, &mut beta, params.tol, params.max_sweeps, false);
        return Ok((prep.model(&beta, p, lambda), None));
    }

    let lmax = prep.lambda_max();
    if lmax == 0.0 || q == 0 {
        let model = prep.model(&Array1::zeros(q), p, 0.0);
        let report = TuningReport::select("lambda", vec![0.0], vec![0.0]);
        return Ok((model, Some(report)));
    }
    let lambdas = grid(lmax, params);

    let folds = tuning_folds(x.nrows(), params.folds, seed)?;
    let mut cv = vec![0.0; lambdas.len()];
    for (train, test) in &folds {
        let xt = take_rows(x, train);
        let yt = take(y, train);
        let xv = take_rows(x, test);
        let yv = take(y, test);
        let fold_prep = prepare(xt.view(), yt.view());
        let mut beta = Array1::zeros(fold_prep.active.len());
        for (i, &lambda) in lambdas.iter().enumerate() {
            coordinate_descent(
                &fold_prep.gram,
                &fold_prep.c,
                lambda,
                &mut beta,
                params.tol,
                params.max_sweeps,
                false,
            );
            let pred = fold_prep.model(&beta, p, lambda).predict(xv.view());
            cv[i] += mse(pred.as_slice().unwrap(), yv.as_slice().unwrap()) / folds.len() as f64;
        }
    }
    let report = TuningReport::select("lambda", lambdas.clone(), cv);
    let chosen = report.chosen_index();

    let mut beta = Array1::zeros(q);
    for &lambda in &lambdas[..=chosen] {
        coordinate_descent(&prep.gram, &prep.c, lambda, &mut beta, params.tol, params.max_sweeps, false);
    }
    Ok((prep.model(&beta, p, lambdas[chosen]), Some(report)))
}
