//! Summaries of Monte-Carlo estimates and first-stage diagnostics.

use serde::{Deserialize, Serialize};

use crate::dml::EstimateRecord;
use crate::error::{DmlError, Result};

/// Exact median; the mean of the middle two for even lengths. NaN if empty.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Type-7 (linear interpolation) quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Per-cell, per-method summary of replicated estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub case: String,
    pub cell: String,
    pub method: String,
    pub n_reps: usize,
    pub truth: f64,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub bias: f64,
    pub mae: f64,
    pub mean_mse_w: Option<f64>,
    pub mean_mse_y: Option<f64>,
    #[serde(skip)]
    pub estimates: Vec<f64>,
}

impl CellSummary {
    pub fn labelled(mut self, case: &str, cell: &str, method: &str) -> Self {
        self.case = case.to_string();
        self.cell = cell.to_string();
        self.method = method.to_string();
        self
    }

    /// Attaches the mean first-stage MSEs of the records that report them.
    pub fn with_first_stage(mut self, records: &[EstimateRecord]) -> Self {
        let avg = |f: fn(&EstimateRecord) -> Option<f64>| {
            let v: Vec<f64> = records.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        self.mean_mse_w = avg(|r| r.mse_w);
        self.mean_mse_y = avg(|r| r.mse_y);
        self
    }
}

/// Bias, mean absolute error and order statistics of `estimates` around `truth`.
pub fn summarize(estimates: &[f64], truth: f64) -> Result<CellSummary> {
    if estimates.is_empty() {
        return Err(DmlError::Empty("estimates"));
    }
    let n = estimates.len() as f64;
    let sorted = sorted_copy(estimates);
    // Summing in sorted order keeps the result independent of input order.
    let mean = sorted.iter().sum::<f64>() / n;
    let mut abs_err: Vec<f64> = sorted.iter().map(|e| (e - truth).abs()).collect();
    abs_err.sort_by(f64::total_cmp);
    let mae = abs_err.iter().sum::<f64>() / n;
    Ok(CellSummary {
        case: String::new(),
        cell: String::new(),
        method: String::new(),
        n_reps: estimates.len(),
        truth,
        mean,
        median: median(&sorted),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        bias: mean - truth,
        mae,
        mean_mse_w: None,
        mean_mse_y: None,
        estimates: estimates.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Tukey boxplot statistics with whiskers at the furthest points within 1.5 IQR.
pub fn boxplot(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(DmlError::Empty("boxplot values"));
    }
    let s = sorted_copy(values);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
    Ok(BoxplotStats {
        min: s[0],
        q1,
        median: median(&s),
        q3,
        max: s[s.len() - 1],
        lower_whisker: inside.first().copied().unwrap_or(q1),
        upper_whisker: inside.last().copied().unwrap_or(q3),
        outliers: s.into_iter().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
    })
}

/// Percentage change of a log outcome for a unit change in a regressor that
/// enters squared, evaluated at `mean_level`.
pub fn effect_at_mean(beta: f64, mean_level: f64) -> f64 {
    100.0 * 2.0 * beta * mean_level
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictivenessRow {
    pub method: String,
    pub mse_w: Option<f64>,
    pub mse_y: Option<f64>,
    pub estimate: f64,
    pub se: f64,
    pub abs_bias: Option<f64>,
}

/// Rows sorted by descending `mse_y`; methods without a first stage come first.
/// Equal keys keep their input order.
pub fn predictiveness_table(records: &[(String, EstimateRecord)], truth: Option<f64>) -> Vec<PredictivenessRow> {
    let mut rows: Vec<PredictivenessRow> = records
        .iter()
        .map(|(method, r)| PredictivenessRow {
            method: method.clone(),
            mse_w: r.mse_w,
            mse_y: r.mse_y,
            estimate: r.theta_hat,
            se: r.std_error,
            abs_bias: truth.map(|t| (r.theta_hat - t).abs()),
        })
        .collect();
    let key = |r: &PredictivenessRow| r.mse_y.unwrap_or(f64::INFINITY);
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)));
    rows
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation. NaN when either input has no rank variation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs must have equal length");
    pearson(&ranks(a), &ranks(b))
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
