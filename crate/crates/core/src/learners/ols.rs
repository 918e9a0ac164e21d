use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{least_squares, with_intercept};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coef: Array1<f64>,
}

impl OlsModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.coef) + self.intercept
    }
}

/// Least squares with an intercept.
pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<OlsModel> {
    let design = with_intercept(x);
    let ls = least_squares(design.view(), y)?;
    Ok(OlsModel {
        intercept: ls.coef[0],
        coef: ls.coef.slice(ndarray::s![1..]).to_owned(),
    })
}
