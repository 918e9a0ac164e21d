use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::{mean, mse, take, take_rows, tuning_folds, TuningReport};
use crate::error::{DmlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    pub decay_grid: Vec<f64>,
    pub folds: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub init_range: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 4,
            decay_grid: vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0],
            folds: 5,
            max_iter: 500,
            grad_tol: 1e-6,
            init_range: 0.7,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 {
            return Err(DmlError::config("mlp needs at least one hidden unit"));
        }
        if self.decay_grid.is_empty() || self.decay_grid.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(DmlError::config("mlp decay grid must be non-empty with values >= 0"));
        }
        if self.folds < 2 || self.max_iter < 1 {
            return Err(DmlError::config("mlp folds must be >= 2 and max_iter >= 1"));
        }
        if !(self.grad_tol > 0.0) || !(self.init_range > 0.0) {
            return Err(DmlError::config("mlp grad_tol and init_range must be positive"));
        }
        Ok(())
    }
}

fn n_params(p: usize, hidden: usize) -> usize {
    hidden * (p + 2) + 1
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Network output for one input row. Layout of `w`: hidden-by-input weights
/// (row-major), hidden biases, output weights, output bias.
fn forward(w: &[f64], p: usize, h: usize, row: &[f64], act: &mut [f64]) -> f64 {
    let (w1, rest) = w.split_at(h * p);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h);
    let mut out = b2[0];
    for k in 0..h {
        let z = b1[k] + w1[k * p..(k + 1) * p].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        act[k] = sigmoid(z);
        out += w2[k] * act[k];
    }
    out
}

fn penalty(w: &[f64], p: usize, h: usize) -> f64 {
    let w1 = &w[..h * p];
    let w2 = &w[h * p + h..h * p + 2 * h];
    w1.iter().chain(w2).map(|v| v * v).sum()
}

/// Objective value; stores hidden activations and residuals for `backward`.
#[allow(clippy::too_many_arguments)]
fn forward_all(w: &[f64], x: &[f64], y: &[f64], p: usize, h: usize, decay: f64, acts: &mut [f64], resid: &mut [f64]) -> f64 {
    let mut sse = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let r = forward(w, p, h, &x[i * p..(i + 1) * p], &mut acts[i * h..(i + 1) * h]) - yi;
        resid[i] = r;
        sse += r * r;
    }
    sse + decay * penalty(w, p, h)
}

#[allow(clippy::too_many_arguments)]
fn backward(w: &[f64], x: &[f64], p: usize, h: usize, decay: f64, acts: &[f64], resid: &[f64], g: &mut [f64]) {
    g.iter_mut().for_each(|v| *v = 0.0);
    let w2_off = h * p + h;
    for (i, &r) in resid.iter().enumerate() {
        let row = &x[i * p..(i + 1) * p];
        let act = &acts[i * h..(i + 1) * h];
        let d_out = 2.0 * r;
        g[w2_off + h] += d_out;
        for k in 0..h {
            g[w2_off + k] += d_out * act[k];
            let dz = d_out * w[w2_off + k] * act[k] * (1.0 - act[k]);
            g[h * p + k] += dz;
            for (gj, xj) in g[k * p..(k + 1) * p].iter_mut().zip(row) {
                *gj += dz * xj;
            }
        }
    }
    for j in (0..h * p).chain(w2_off..w2_off + h) {
        g[j] += 2.0 * decay * w[j];
    }
}

fn loss_and_grad(w: &[f64], x: &[f64], y: &[f64], p: usize, h: usize, decay: f64, g: &mut [f64]) -> f64 {
    let mut acts = vec![0.0; y.len() * h];
    let mut resid = vec![0.0; y.len()];
    let f = forward_all(w, x, y, p, h, decay, &mut acts, &mut resid);
    backward(w, x, p, h, decay, &acts, &resid, g);
    f
}

/// Objective `SSE + decay * ||weights||^2` (biases unpenalized) and its gradient
/// for a single-hidden-layer sigmoid network with linear output.
pub fn mlp_objective(
    w: &[f64],
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    hidden: usize,
    decay: f64,
) -> (f64, Vec<f64>) {
    let p = x.ncols();
    assert_eq!(w.len(), n_params(p, hidden));
    let xs: Vec<f64> = x.iter().copied().collect();
    let ys = y.to_vec();
    let mut g = vec![0.0; w.len()];
    let f = loss_and_grad(w, &xs, &ys, p, hidden, decay, &mut g);
    (f, g)
}

/// Full-batch gradient descent with Armijo backtracking; the trial step
/// doubles after every accepted move.
fn train(w: &mut [f64], x: &[f64], y: &[f64], p: usize, h: usize, decay: f64, params: &MlpParams) -> bool {
    let n = y.len();
    let mut g = vec![0.0; w.len()];
    let mut trial = vec![0.0; w.len()];
    let (mut acts, mut resid) = (vec![0.0; n * h], vec![0.0; n]);
    let (mut trial_acts, mut trial_resid) = (vec![0.0; n * h], vec![0.0; n]);
    let mut step = 1.0 / n.max(1) as f64;
    let mut f = forward_all(w, x, y, p, h, decay, &mut acts, &mut resid);
    backward(w, x, p, h, decay, &acts, &resid, &mut g);
    for _ in 0..params.max_iter {
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < params.grad_tol {
            return true;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, wi), gi) in trial.iter_mut().zip(w.iter()).zip(&g) {
                *t = wi - step * gi;
            }
            let ft = forward_all(&trial, x, y, p, h, decay, &mut trial_acts, &mut trial_resid);
            if ft <= f - 1e-4 * step * gnorm2 {
                accepted = true;
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return false;
        }
        w.copy_from_slice(&trial);
        std::mem::swap(&mut acts, &mut trial_acts);
        std::mem::swap(&mut resid, &mut trial_resid);
        backward(w, x, p, h, decay, &acts, &resid, &mut g);
        step *= 2.0;
    }
    g.iter().map(|v| v * v).sum::<f64>().sqrt() < params.grad_tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    std: Standardizer,
    y_mean: f64,
    y_sd: f64,
    hidden: usize,
    weights: Vec<f64>,
    pub decay: f64,
    /// False when the optimizer hit its iteration limit or stalled.
    pub converged: bool,
}

impl MlpModel {
    /// Model from explicit weights with identity input and output scaling.
    pub fn from_weights(p: usize, hidden: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_params(p, hidden) {
            return Err(DmlError::Shape {
                context: "mlp weight count",
                expected: n_params(p, hidden),
                found: weights.len(),
            });
        }
        Ok(MlpModel {
            std: Standardizer {
                mean: Array1::zeros(p),
                sd: Array1::ones(p),
                active: vec![true; p],
            },
            y_mean: 0.0,
            y_sd: 1.0,
            hidden,
            weights,
            decay: 0.0,
            converged: true,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.std.mean.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let p = x.ncols();
        let z = self.std.transform(x);
        let mut act = vec![0.0; self.hidden];
        let mut row = vec![0.0; p];
        (0..x.nrows())
            .map(|i| {
                row.iter_mut().zip(z.row(i)).for_each(|(r, v)| *r = *v);
                self.y_mean + self.y_sd * forward(&self.weights, p, self.hidden, &row, &mut act)
            })
            .collect()
    }
}

fn init_weights(p: usize, h: usize, range: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_params(p, h)).map(|_| rng.random_range(-range..range)).collect()
}

fn fit_one(x: ArrayView2<f64>, y: ArrayView1<f64>, decay: f64, params: &MlpParams, seed: u64) -> MlpModel {
    let (n, p) = x.dim();
    let std = Standardizer::fit(x);
    let y_mean = mean(y);
    let y_sd = (y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64).sqrt();
    let h = params.hidden;
    if !(y_sd > 0.0) {
        return MlpModel {
            std,
            y_mean,
            y_sd: 1.0,
            hidden: h,
            weights: vec![0.0; n_params(p, h)],
            decay,
            converged: true,
        };
    }
    let xs: Vec<f64> = std.transform(x).iter().copied().collect();
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();
    let mut weights = init_weights(p, h, params.init_range, seed);
    let converged = train(&mut weights, &xs, &ys, p, h, decay, params);
    MlpModel {
        std,
        y_mean,
        y_sd,
        hidden: h,
        weights,
        decay,
        converged,
    }
}

/// Single-hidden-layer network with weight decay chosen by K-fold CV.
pub fn fit_mlp(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &MlpParams,
    seed: u64,
) -> Result<(MlpModel, TuningReport)> {
    let n = x.nrows();
    if n < 10 {
        return Err(DmlError::config(format!("mlp needs at least 10 rows, got {n}")));
    }
    let folds = tuning_folds(n, params.folds, seed)?;
    let mut errors = vec![0.0; params.decay_grid.len()];
    for (train_rows, test_rows) in &folds {
        let xt = take_rows(x, train_rows);
        let yt = take(y, train_rows);
        let xv = take_rows(x, test_rows);
        let yv = take(y, test_rows);
        for (d, &decay) in params.decay_grid.iter().enumerate() {
            let m = fit_one(xt.view(), yt.view(), decay, params, seed);
            let pred = m.predict(xv.view());
            errors[d] += mse(pred.as_slice().unwrap(), yv.as_slice().unwrap()) / folds.len() as f64;
        }
    }
    let report = TuningReport::select("decay", params.decay_grid.clone(), errors);
    let model = fit_one(x, y, report.chosen, params, seed);
    if !model.converged {
        log::debug!("mlp: optimizer stopped before reaching the gradient tolerance");
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_weights_output_the_bias() {
        let p = 3;
        let h = 4;
        let mut w = vec![0.0; n_params(p, h)];
        *w.last_mut().unwrap() = 1.75;
        let m = MlpModel::from_weights(p, h, w).unwrap();
        let x = Array2::from_shape_fn((5, p), |(i, j)| (i as f64) - 2.0 * j as f64);
        assert!(m.predict(x.view()).iter().all(|&v| v == 1.75));
    }

    #[test]
    fn linear_target_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = |rng: &mut ChaCha8Rng, n: usize| {
            let x = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
            let y = x.column(0).mapv(|v| 3.0 * v + 1.0);
            (x, y)
        };
        let (x, y) = draw(&mut rng, 500);
        let (xt, yt) = draw(&mut rng, 2000);
        let (m, report) = fit_mlp(x.view(), y.view(), &MlpParams::default(), 5).unwrap();
        let pred = m.predict(xt.view());
        let test = mse(pred.as_slice().unwrap(), yt.as_slice().unwrap());
        assert!(test < 0.05, "test mse {test}");
        assert_eq!(report.candidates.len(), 6);
    }

    #[test]
    fn fit_is_deterministic() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 3 + j * 5) % 17) as f64 / 4.0);
        let y: Array1<f64> = (0..40).map(|i| (i as f64 / 7.0).sin()).collect();
        let a = fit_mlp(x.view(), y.view(), &MlpParams::default(), 9).unwrap().0;
        let b = fit_mlp(x.view(), y.view(), &MlpParams::default(), 9).unwrap().0;
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gradient_matches_central_differences(
            seed in 0u64..10_000,
            p in 1usize..5,
            h in 1usize..6,
            n in 2usize..12,
            decay in 0.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
            let y: Array1<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let w: Vec<f64> = (0..n_params(p, h)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = mlp_objective(&w, x.view(), y.view(), h, decay);
            let step = 1e-5;
            for j in 0..w.len() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += step;
                wm[j] -= step;
                let fd = (mlp_objective(&wp, x.view(), y.view(), h, decay).0
                    - mlp_objective(&wm, x.view(), y.view(), h, decay).0) / (2.0 * step);
                let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-4);
                prop_assert!(rel < 1e-4, "param {} analytic {} numeric {}", j, g[j], fd);
            }
        }
    }
}
