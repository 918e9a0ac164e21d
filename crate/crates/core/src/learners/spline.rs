use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{mean, TuningReport};
use crate::error::{DmlError, Result};
use crate::linalg::{cholesky, cholesky_solve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineParams {
    /// Cubic B-spline basis functions per feature.
    pub n_basis: usize,
    pub n_lambda: usize,
    pub log10_lambda_min: f64,
    pub log10_lambda_max: f64,
}

impl Default for SplineParams {
    fn default() -> Self {
        SplineParams {
            n_basis: 8,
            n_lambda: 20,
            log10_lambda_min: -6.0,
            log10_lambda_max: 3.0,
        }
    }
}

impl SplineParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_basis < 4 {
            return Err(DmlError::config("spline n_basis must be >= 4 for a cubic basis"));
        }
        if self.n_lambda < 1 || !(self.log10_lambda_min <= self.log10_lambda_max) {
            return Err(DmlError::config("spline lambda grid is empty or reversed"));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let m = self.n_lambda;
        (0..m)
            .map(|i| {
                let t = if m == 1 { 0.0 } else { i as f64 / (m - 1) as f64 };
                10f64.powf(self.log10_lambda_min + t * (self.log10_lambda_max - self.log10_lambda_min))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Term {
    Dropped,
    Linear {
        mean: f64,
        sd: f64,
        coef: f64,
    },
    Spline {
        lo: f64,
        hi: f64,
        /// Weights on the raw B-spline basis (constraint already applied).
        weights: Vec<f64>,
    },
}

/// Additive model: intercept plus one penalized smooth (or linear) term per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    intercept: f64,
    terms: Vec<Term>,
    pub lambda: f64,
    pub edf: f64,
}

impl SplineModel {
    pub fn feature_count(&self) -> usize {
        self.terms.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut out = Array1::from_elem(x.nrows(), self.intercept);
        let mut buf = Vec::new();
        for (j, term) in self.terms.iter().enumerate() {
            match term {
                Term::Dropped => {}
                Term::Linear { mean, sd, coef } => {
                    for (o, &v) in out.iter_mut().zip(x.column(j)) {
                        *o += coef * (v - mean) / sd;
                    }
                }
                Term::Spline { lo, hi, weights } => {
                    for (o, &v) in out.iter_mut().zip(x.column(j)) {
                        bspline_row(v, *lo, *hi, weights.len(), &mut buf);
                        *o += buf.iter().zip(weights).map(|(b, w)| b * w).sum::<f64>();
                    }
                }
            }
        }
        out
    }
}

/// Uniform cubic B-spline basis of size `k` on `[lo, hi]`, evaluated at the
/// clamped value of `x`.
fn bspline_row(x: f64, lo: f64, hi: f64, k: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(k, 0.0);
    let nseg = k - 3;
    let dx = (hi - lo) / nseg as f64;
    let t = ((x.clamp(lo, hi) - lo) / dx).max(0.0);
    let seg = (t.floor() as usize).min(nseg - 1);
    let u = t - seg as f64;
    let u2 = u * u;
    let u3 = u2 * u;
    out[seg] = (1.0 - u).powi(3) / 6.0;
    out[seg + 1] = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0;
    out[seg + 2] = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
    out[seg + 3] = u3 / 6.0;
}

/// Orthonormal basis (k x k-1) of the complement of `a`.
fn null_space(a: &[f64]) -> Array2<f64> {
    let k = a.len();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = a.to_vec();
    v[0] += if a[0] >= 0.0 { norm } else { -norm };
    let vv: f64 = v.iter().map(|t| t * t).sum();
    let mut h = Array2::<f64>::eye(k);
    if vv > 0.0 {
        for i in 0..k {
            for j in 0..k {
                h[[i, j]] -= 2.0 * v[i] * v[j] / vv;
            }
        }
    }
    h.slice(s![.., 1..]).to_owned()
}

/// Second-order difference penalty `D'D` on `k` coefficients.
fn difference_penalty(k: usize) -> Array2<f64> {
    let mut d = Array2::<f64>::zeros((k - 2, k));
    for i in 0..k - 2 {
        d[[i, i]] = 1.0;
        d[[i, i + 1]] = -2.0;
        d[[i, i + 2]] = 1.0;
    }
    d.t().dot(&d)
}

enum Plan {
    Dropped,
    Linear { mean: f64, sd: f64 },
    Spline { lo: f64, hi: f64, z: Array2<f64> },
}

fn distinct_at_least(col: ArrayView1<f64>, k: usize) -> bool {
    let mut v: Vec<f64> = col.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v.len() >= k
}

/// Penalized additive spline regression with the smoothing parameter chosen by
/// generalized cross-validation. Features with fewer distinct values than
/// basis functions enter linearly; constant features are dropped.
pub fn fit_spline_additive(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &SplineParams,
) -> Result<(SplineModel, TuningReport)> {
    let (n, p) = x.dim();
    let k = params.n_basis;
    if p * k >= n {
        return Err(DmlError::Dimensionality {
            basis: p * k,
            rows: n,
        });
    }

    let mut plans = Vec::with_capacity(p);
    let mut width = 1;
    for j in 0..p {
        let col = x.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let plan = if !(hi > lo) {
            Plan::Dropped
        } else if !distinct_at_least(col, k) {
            let m = mean(col);
            let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
            width += 1;
            Plan::Linear { mean: m, sd }
        } else {
            let mut sums = vec![0.0; k];
            let mut buf = Vec::new();
            for &v in col {
                bspline_row(v, lo, hi, k, &mut buf);
                for (s, b) in sums.iter_mut().zip(&buf) {
                    *s += b;
                }
            }
            width += k - 1;
            Plan::Spline {
                lo,
                hi,
                z: null_space(&sums),
            }
        };
        plans.push(plan);
    }

    let mut design = Array2::<f64>::zeros((n, width));
    design.column_mut(0).fill(1.0);
    let mut penalty = Array2::<f64>::zeros((width, width));
    let raw_penalty = difference_penalty(k);
    let mut offset = 1;
    let mut buf = Vec::new();
    for (j, plan) in plans.iter().enumerate() {
        match plan {
            Plan::Dropped => {}
            Plan::Linear { mean, sd } => {
                for i in 0..n {
                    design[[i, offset]] = (x[[i, j]] - mean) / sd;
                }
                offset += 1;
            }
            Plan::Spline { lo, hi, z } => {
                for i in 0..n {
                    bspline_row(x[[i, j]], *lo, *hi, k, &mut buf);
                    for c in 0..k - 1 {
                        design[[i, offset + c]] = (0..k).map(|r| buf[r] * z[[r, c]]).sum();
                    }
                }
                let block = z.t().dot(&raw_penalty).dot(z);
                penalty
                    .slice_mut(s![offset..offset + k - 1, offset..offset + k - 1])
                    .assign(&block);
                offset += k - 1;
            }
        }
    }

    let xtx = design.t().dot(&design);
    let xty = design.t().dot(&y);
    let lambdas = params.grid();
    let mut scores = Vec::with_capacity(lambdas.len());
    let mut solutions: Vec<Option<(Array1<f64>, f64)>> = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        // Lambda is per observation.
        let a = &xtx + &(&penalty * (lambda * n as f64));
        let solved = cholesky(&a).ok().map(|l| {
            let beta = cholesky_solve(&l, xty.view());
            let mut edf = 0.0;
            for c in 0..width {
                let col = cholesky_solve(&l, xtx.column(c));
                edf += col[c];
            }
            (beta, edf)
        });
        let score = match &solved {
            Some((beta, edf)) if *edf < n as f64 => {
                let fitted = design.dot(beta);
                let rss: f64 = fitted.iter().zip(y).map(|(f, v)| (v - f) * (v - f)).sum();
                n as f64 * rss / (n as f64 - edf).powi(2)
            }
            _ => f64::INFINITY,
        };
        scores.push(score);
        solutions.push(solved);
    }
    if scores.iter().all(|s| !s.is_finite()) {
        return Err(DmlError::Singular {
            condition: f64::INFINITY,
        });
    }
    let report = TuningReport::select("lambda", lambdas, scores);
    let best = report.chosen_index();
    let (beta, edf) = solutions[best].clone().expect("finite score implies a solution");

    let mut terms = Vec::with_capacity(p);
    let mut offset = 1;
    for plan in plans {
        terms.push(match plan {
            Plan::Dropped => Term::Dropped,
            Plan::Linear { mean, sd } => {
                offset += 1;
                Term::Linear {
                    mean,
                    sd,
                    coef: beta[offset - 1],
                }
            }
            Plan::Spline { lo, hi, z } => {
                let block = beta.slice(s![offset..offset + k - 1]);
                offset += k - 1;
                Term::Spline {
                    lo,
                    hi,
                    weights: z.dot(&block).to_vec(),
                }
            }
        });
    }
    Ok((
        SplineModel {
            intercept: beta[0],
            terms,
            lambda: report.chosen,
            edf,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_ols;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn draw(seed: u64, n: usize, p: usize, f: impl Fn(&[f64]) -> f64, noise: f64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| f(x.row(i).as_slice().unwrap()) + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    fn test_mse(m: &SplineModel, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let p = m.predict(x.view());
        p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn basis_is_a_partition_of_unity() {
        let mut buf = Vec::new();
        for i in 0..=100 {
            let x = -1.0 + 3.0 * i as f64 / 100.0;
            bspline_row(x, -1.0, 2.0, 8, &mut buf);
            assert!((buf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(buf.iter().all(|&b| b >= 0.0));
        }
    }

    #[test]
    fn null_space_is_orthonormal_complement() {
        let a = [0.3, 1.2, -0.4, 2.0];
        let z = null_space(&a);
        let av = Array1::from(a.to_vec());
        for c in 0..3 {
            assert!(av.dot(&z.column(c)).abs() < 1e-12);
            for d in 0..3 {
                let dot = z.column(c).dot(&z.column(d));
                assert!((dot - if c == d { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_target_reaches_noise_floor() {
        let sigma = 0.5;
        let (x, y) = draw(1, 1000, 1, |r| r[0] * r[0], sigma);
        let (xt, yt) = draw(2, 5000, 1, |r| r[0] * r[0], sigma);
        let (m, _) = fit_spline_additive(x.view(), y.view(), &SplineParams::default()).unwrap();
        let mse = test_mse(&m, &xt, &yt);
        assert!(mse < 1.10 * sigma * sigma, "test mse {mse}");
    }

    #[test]
    fn linear_target_is_as_good_as_ols() {
        let f = |r: &[f64]| 1.0 + 2.0 * r[0] - r[1];
        let (x, y) = draw(3, 500, 2, f, 1.0);
        let (xt, yt) = draw(4, 5000, 2, f, 1.0);
        let (m, _) = fit_spline_additive(x.view(), y.view(), &SplineParams::default()).unwrap();
        let ols = fit_ols(x.view(), y.view()).unwrap();
        let po = ols.predict(xt.view());
        let ols_mse = po.iter().zip(&yt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / yt.len() as f64;
        assert!(test_mse(&m, &xt, &yt) <= 1.05 * ols_mse);
    }

    #[test]
    fn small_sample_is_a_dimensionality_error() {
        let (x, y) = draw(5, 20, 5, |r| r[0], 1.0);
        match fit_spline_additive(x.view(), y.view(), &SplineParams::default()) {
            Err(DmlError::Dimensionality { basis, rows }) => {
                assert_eq!(basis, 40);
                assert_eq!(rows, 20);
            }
            other => panic!("expected dimensionality error, got {other:?}"),
        }
    }

    #[test]
    fn binary_and_constant_features_are_handled() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200;
        let x = Array2::from_shape_fn((n, 3), |(_, j)| match j {
            0 => rng.sample::<f64, _>(StandardNormal),
            1 => f64::from(rng.random_bool(0.4)),
            _ => 3.0,
        });
        let y: Array1<f64> = (0..n).map(|i| x[[i, 0]].sin() + 2.0 * x[[i, 1]]).collect();
        let (m, report) = fit_spline_additive(x.view(), y.view(), &SplineParams::default()).unwrap();
        assert!(matches!(m.terms[1], Term::Linear { .. }));
        assert!(matches!(m.terms[2], Term::Dropped));
        assert_eq!(report.candidates.len(), 20);
        assert!(test_mse(&m, &x, &y) < 0.01);
    }

    #[test]
    fn predictions_clamp_outside_training_range() {
        let (x, y) = draw(7, 300, 1, |r| r[0].powi(3), 0.1);
        let (m, _) = fit_spline_additive(x.view(), y.view(), &SplineParams::default()).unwrap();
        let hi = x.column(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let probe = Array2::from_shape_vec((2, 1), vec![hi, hi + 10.0]).unwrap();
        let p = m.predict(probe.view());
        assert_eq!(p[0], p[1]);
    }
}
