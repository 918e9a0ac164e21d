//! Supervised regression learners behind a uniform fit/predict contract.
//!
//! Every learner is deterministic given its inputs and `tuning_seed`.

mod boost;
mod forest;
mod lasso;
mod mlp;
mod ols;
mod spline;
mod standardize;
pub mod tree;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};

pub use boost::{fit_gradient_boost, BoostModel, BoostParams};
pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use lasso::{coordinate_descent, fit_lasso, lambda_max, CdOutcome, LassoModel, LassoParams};
pub use mlp::{fit_mlp, mlp_objective, MlpModel, MlpParams};
pub use ols::{fit_ols, OlsModel};
pub use spline::{fit_spline_additive, SplineModel, SplineParams};
pub use standardize::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Ols,
    Lasso,
    SplineAdditive,
    RandomForest,
    GradientBoost,
    Mlp,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::Ols,
        LearnerKind::Lasso,
        LearnerKind::SplineAdditive,
        LearnerKind::RandomForest,
        LearnerKind::GradientBoost,
        LearnerKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Ols => "ols",
            LearnerKind::Lasso => "lasso",
            LearnerKind::SplineAdditive => "spline_additive",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::GradientBoost => "gradient_boost",
            LearnerKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<LearnerKind> {
        let lower = s.to_ascii_lowercase();
        let alias = match lower.as_str() {
            "gam" | "spline" | "gams" => "spline_additive",
            "rf" | "forest" => "random_forest",
            "gb" | "xgboost" | "boost" => "gradient_boost",
            "nnet" | "neural_net" => "mlp",
            other => other,
        };
        LearnerKind::ALL.into_iter().find(|k| k.name() == alias)
    }
}

/// Kind-specific hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum LearnerParams {
    Ols(OlsParams),
    Lasso(LassoParams),
    SplineAdditive(SplineParams),
    RandomForest(ForestParams),
    GradientBoost(BoostParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlsParams {}

/// Declarative learner configuration, serialized as
/// `{"kind": ..., "params": {...}, "tuning_seed": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub params: LearnerParams,
    #[serde(default)]
    pub tuning_seed: u64,
}

impl LearnerSpec {
    pub fn new(params: LearnerParams) -> Self {
        LearnerSpec {
            params,
            tuning_seed: 0,
        }
    }

    /// Default configuration of the given kind.
    pub fn default_for(kind: LearnerKind) -> Self {
        LearnerSpec::new(match kind {
            LearnerKind::Ols => LearnerParams::Ols(OlsParams::default()),
            LearnerKind::Lasso => LearnerParams::Lasso(LassoParams::default()),
            LearnerKind::SplineAdditive => LearnerParams::SplineAdditive(SplineParams::default()),
            LearnerKind::RandomForest => LearnerParams::RandomForest(ForestParams::default()),
            LearnerKind::GradientBoost => LearnerParams::GradientBoost(BoostParams::default()),
            LearnerKind::Mlp => LearnerParams::Mlp(MlpParams::default()),
        })
    }

    pub fn ols() -> Self {
        Self::default_for(LearnerKind::Ols)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.tuning_seed = seed;
        self
    }

    pub fn kind(&self) -> LearnerKind {
        match self.params {
            LearnerParams::Ols(_) => LearnerKind::Ols,
            LearnerParams::Lasso(_) => LearnerKind::Lasso,
            LearnerParams::SplineAdditive(_) => LearnerKind::SplineAdditive,
            LearnerParams::RandomForest(_) => LearnerKind::RandomForest,
            LearnerParams::GradientBoost(_) => LearnerKind::GradientBoost,
            LearnerParams::Mlp(_) => LearnerKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            LearnerParams::Ols(_) => Ok(()),
            LearnerParams::Lasso(p) => p.validate(),
            LearnerParams::SplineAdditive(p) => p.validate(),
            LearnerParams::RandomForest(p) => p.validate(),
            LearnerParams::GradientBoost(p) => p.validate(),
            LearnerParams::Mlp(p) => p.validate(),
        }
    }
}

/// Candidate values tried during tuning with their validation errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub parameter: String,
    pub candidates: Vec<f64>,
    pub errors: Vec<f64>,
    pub chosen: f64,
}

impl TuningReport {
    /// Picks the candidate with the smallest error; ties go to the smallest
    /// candidate value. Non-finite errors never win.
    pub fn select(parameter: &str, candidates: Vec<f64>, errors: Vec<f64>) -> TuningReport {
        let best = best_index(&candidates, &errors);
        TuningReport {
            parameter: parameter.to_string(),
            chosen: candidates[best],
            candidates,
            errors,
        }
    }

    pub fn chosen_index(&self) -> usize {
        best_index(&self.candidates, &self.errors)
    }
}

pub(crate) fn best_index(candidates: &[f64], errors: &[f64]) -> usize {
    assert_eq!(candidates.len(), errors.len());
    assert!(!candidates.is_empty());
    let mut best = 0;
    for i in 1..candidates.len() {
        let (e, b) = (errors[i], errors[best]);
        let better = match (e.is_finite(), b.is_finite()) {
            (true, false) => true,
            (false, _) => false,
            (true, true) => e < b || (e == b && candidates[i] < candidates[best]),
        };
        if better {
            best = i;
        }
    }
    best
}

/// A fitted predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedModel {
    Ols(OlsModel),
    Lasso(LassoModel),
    SplineAdditive(SplineModel),
    RandomForest(ForestModel),
    GradientBoost(BoostModel),
    Mlp(MlpModel),
}

impl FittedModel {
    pub fn feature_count(&self) -> usize {
        match self {
            FittedModel::Ols(m) => m.coef.len(),
            FittedModel::Lasso(m) => m.coef.len(),
            FittedModel::SplineAdditive(m) => m.feature_count(),
            FittedModel::RandomForest(m) => m.feature_count(),
            FittedModel::GradientBoost(m) => m.feature_count(),
            FittedModel::Mlp(m) => m.feature_count(),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.feature_count() {
            return Err(DmlError::Shape {
                context: "predict feature count",
                expected: self.feature_count(),
                found: x.ncols(),
            });
        }
        Ok(match self {
            FittedModel::Ols(m) => m.predict(x),
            FittedModel::Lasso(m) => m.predict(x),
            FittedModel::SplineAdditive(m) => m.predict(x),
            FittedModel::RandomForest(m) => m.predict(x),
            FittedModel::GradientBoost(m) => m.predict(x),
            FittedModel::Mlp(m) => m.predict(x),
        })
    }
}

/// Result of fitting a learner: the model plus its tuning trace, if any.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: FittedModel,
    pub report: Option<TuningReport>,
}

/// Fits the learner described by `spec` on `(x, y)`.
pub fn fit(spec: &LearnerSpec, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Fit> {
    spec.validate()?;
    check_xy(x, y)?;
    let seed = spec.tuning_seed;
    Ok(match &spec.params {
        LearnerParams::Ols(_) => Fit {
            model: FittedModel::Ols(fit_ols(x, y)?),
            report: None,
        },
        LearnerParams::Lasso(p) => {
            let (m, r) = fit_lasso(x, y, p, seed)?;
            Fit {
                model: FittedModel::Lasso(m),
                report: r,
            }
        }
        LearnerParams::SplineAdditive(p) => {
            let (m, r) = fit_spline_additive(x, y, p)?;
            Fit {
                model: FittedModel::SplineAdditive(m),
                report: Some(r),
            }
        }
        LearnerParams::RandomForest(p) => {
            let (m, r) = fit_random_forest(x, y, p, seed)?;
            Fit {
                model: FittedModel::RandomForest(m),
                report: Some(r),
            }
        }
        LearnerParams::GradientBoost(p) => {
            let (m, r) = fit_gradient_boost(x, y, p, seed)?;
            Fit {
                model: FittedModel::GradientBoost(m),
                report: Some(r),
            }
        }
        LearnerParams::Mlp(p) => {
            let (m, r) = fit_mlp(x, y, p, seed)?;
            Fit {
                model: FittedModel::Mlp(m),
                report: Some(r),
            }
        }
    })
}

pub(crate) fn check_xy(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(DmlError::Shape {
            context: "learner rows",
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(DmlError::Empty("learner training data"));
    }
    Ok(())
}

pub(crate) fn mean(v: ArrayView1<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sum() / v.len() as f64
}

pub(crate) fn mse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Cross-validation folds used for tuning: `min(k, n)` folds from a seeded split.
pub(crate) fn tuning_folds(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let k = k.min(n);
    let plan = crate::data::make_split(n, k, seed)?;
    Ok((0..k).map(|f| (plan.train_rows(f), plan.fold_rows(f))).collect())
}

pub(crate) fn take_rows(x: ArrayView2<f64>, rows: &[usize]) -> ndarray::Array2<f64> {
    x.select(ndarray::Axis(0), rows)
}

pub(crate) fn take(y: ArrayView1<f64>, rows: &[usize]) -> Array1<f64> {
    rows.iter().map(|&i| y[i]).collect()
}
