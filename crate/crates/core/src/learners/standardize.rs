use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Per-column centering and scaling learned on training rows only.
///
/// Columns with zero variance are flagged as inactive and mapped to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub sd: Array1<f64>,
    pub active: Vec<bool>,
}

impl Standardizer {
    /// Population (divide-by-n) moments of every column.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let (n, p) = x.dim();
        let mut mean = Array1::zeros(p);
        let mut sd = Array1::ones(p);
        let mut active = vec![false; p];
        for j in 0..p {
            let col = x.column(j);
            let m = col.sum() / n.max(1) as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n.max(1) as f64;
            mean[j] = m;
            let scale = m.abs().max(1.0);
            if var.sqrt() > 1e-12 * scale {
                sd[j] = var.sqrt();
                active[j] = true;
            }
        }
        Standardizer { mean, sd, active }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.active[j] {
                let (m, s) = (self.mean[j], self.sd[j]);
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        out
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}
