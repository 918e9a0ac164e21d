//! Small dense linear-algebra kernels: Householder least squares and Cholesky.
//!
//! The problems solved here are at most a few hundred columns wide, so plain
//! `ndarray` loops are fast enough and keep the numerics easy to audit.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{DmlError, Result};

/// Column-scaled condition estimates above this are treated as rank deficiency.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Solution of an ordinary least-squares problem `min ||y - X b||`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Array1<f64>,
    /// `(X'X)^{-1}`, used for classical standard errors.
    pub xtx_inv: Array2<f64>,
    pub rss: f64,
    pub n: usize,
    pub condition: f64,
}

impl LeastSquares {
    /// Residual degrees of freedom `n - q`.
    pub fn df_resid(&self) -> usize {
        self.n.saturating_sub(self.coef.len())
    }

    /// Classical (homoskedastic) standard error of coefficient `j`.
    pub fn classical_se(&self, j: usize) -> f64 {
        let df = self.df_resid();
        if df == 0 {
            return f64::NAN;
        }
        let sigma2 = self.rss / df as f64;
        (sigma2 * self.xtx_inv[[j, j]]).max(0.0).sqrt()
    }
}

/// Least squares via Householder QR on a column-scaled copy of `x`.
///
/// Fails with [`DmlError::Singular`] when the scaled triangular factor has a
/// condition estimate above [`SINGULAR_CONDITION`] or an exactly zero pivot.
pub fn least_squares(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LeastSquares> {
    let (n, q) = x.dim();
    if y.len() != n {
        return Err(DmlError::Shape {
            context: "least_squares rows",
            expected: n,
            found: y.len(),
        });
    }
    if q == 0 {
        return Err(DmlError::config("least squares needs at least one column"));
    }
    if n < q {
        return Err(DmlError::Singular {
            condition: f64::INFINITY,
        });
    }

    let mut scale = Array1::<f64>::zeros(q);
    let mut a = x.to_owned();
    for j in 0..q {
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm == 0.0 {
            return Err(DmlError::Singular {
                condition: f64::INFINITY,
            });
        }
        scale[j] = norm;
        a.column_mut(j).mapv_inplace(|v| v / norm);
    }
    let mut qty = y.to_owned();

    let mut v = vec![0.0; n];
    for k in 0..q {
        let mut norm = 0.0;
        for i in k..n {
            norm += a[[i, k]] * a[[i, k]];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return Err(DmlError::Singular {
                condition: f64::INFINITY,
            });
        }
        let alpha = if a[[k, k]] > 0.0 { -norm } else { norm };
        for i in k..n {
            v[i] = a[[i, k]];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v[k..n].iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for j in k..q {
                let mut dot = 0.0;
                for i in k..n {
                    dot += v[i] * a[[i, j]];
                }
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[[i, j]] -= f * v[i];
                }
            }
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i] * qty[i];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                qty[i] -= f * v[i];
            }
        }
    }

    let r = a.slice(s![0..q, 0..q]).to_owned();
    let diag_max = (0..q).map(|i| r[[i, i]].abs()).fold(0.0, f64::max);
    let diag_min = (0..q).map(|i| r[[i, i]].abs()).fold(f64::INFINITY, f64::min);
    let condition = if diag_min == 0.0 {
        f64::INFINITY
    } else {
        (diag_max / diag_min).powi(2)
    };
    if !(condition <= SINGULAR_CONDITION) {
        return Err(DmlError::Singular { condition });
    }

    // Back substitution in the scaled coordinates.
    let mut coef_scaled = Array1::<f64>::zeros(q);
    for i in (0..q).rev() {
        let mut acc = qty[i];
        for j in (i + 1)..q {
            acc -= r[[i, j]] * coef_scaled[j];
        }
        coef_scaled[i] = acc / r[[i, i]];
    }
    let rss: f64 = qty.slice(s![q..]).iter().map(|t| t * t).sum();

    let rinv = upper_triangular_inverse(&r);
    let scaled_inv = rinv.dot(&rinv.t());
    let mut xtx_inv = Array2::<f64>::zeros((q, q));
    for i in 0..q {
        for j in 0..q {
            xtx_inv[[i, j]] = scaled_inv[[i, j]] / (scale[i] * scale[j]);
        }
    }
    let coef = Array1::from_shape_fn(q, |j| coef_scaled[j] / scale[j]);

    Ok(LeastSquares {
        coef,
        xtx_inv,
        rss,
        n,
        condition,
    })
}

fn upper_triangular_inverse(r: &Array2<f64>) -> Array2<f64> {
    let q = r.nrows();
    let mut inv = Array2::<f64>::zeros((q, q));
    for col in 0..q {
        for i in (0..=col).rev() {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in (i + 1)..=col {
                acc -= r[[i, k]] * inv[[k, col]];
            }
            inv[[i, col]] = acc / r[[i, i]];
        }
    }
    inv
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return Err(DmlError::Singular {
                condition: f64::INFINITY,
            });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / d;
        }
    }
    Ok(l)
}

/// Solves `L L' x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut z = b.to_owned();
    for i in 0..n {
        let mut acc = z[i];
        for k in 0..i {
            acc -= l[[i, k]] * z[k];
        }
        z[i] = acc / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in (i + 1)..n {
            acc -= l[[k, i]] * z[k];
        }
        z[i] = acc / l[[i, i]];
    }
    z
}

/// Prepends a column of ones.
pub fn with_intercept(x: ArrayView2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut out = Array2::<f64>::ones((n, p + 1));
    out.slice_mut(s![.., 1..]).assign(&x);
    out
}
