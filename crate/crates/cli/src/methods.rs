use dml_core::{
    estimate_naive_ml, estimate_ols_adjusted, estimate_simple_ols, repeat_median, AggregateEstimate, Dataset, DmlConfig,
    DmlError, EstimateRecord, LearnerKind, LearnerSpec,
};

use crate::CliError;

/// An estimator the runners know how to apply to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SimpleOls,
    Ols,
    NaiveGb,
    Dml(LearnerKind),
}

impl Method {
    pub fn name(self) -> String {
        match self {
            Method::SimpleOls => "simple_ols".into(),
            Method::Ols => "ols".into(),
            Method::NaiveGb => "naive_gb".into(),
            Method::Dml(k) => format!("dml_{}", short(k)),
        }
    }

    /// Accepts method names (`dml_gb`, `simple_ols`, ...) and bare learner
    /// names or aliases, which select the DML variant.
    pub fn parse(s: &str) -> Result<Method, CliError> {
        let lower = s.trim().to_ascii_lowercase();
        let found = match lower.as_str() {
            "simple_ols" => Some(Method::SimpleOls),
            "ols" => Some(Method::Ols),
            "naive_gb" | "naive" => Some(Method::NaiveGb),
            other => {
                let kind = other.strip_prefix("dml_").unwrap_or(other);
                LearnerKind::parse(kind).map(Method::Dml)
            }
        };
        found.ok_or_else(|| CliError::config(format!("unknown method or learner '{s}'")))
    }

    pub fn is_cross_fitted(self) -> bool {
        matches!(self, Method::Dml(_))
    }
}

fn short(k: LearnerKind) -> &'static str {
    match k {
        LearnerKind::Ols => "ols",
        LearnerKind::Lasso => "lasso",
        LearnerKind::SplineAdditive => "spline",
        LearnerKind::RandomForest => "rf",
        LearnerKind::GradientBoost => "gb",
        LearnerKind::Mlp => "mlp",
    }
}

/// Estimation settings shared by every method of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub folds: usize,
    pub splits: usize,
    pub trim: f64,
    pub seed: u64,
}

/// Collapses S repetitions into one record holding the medians.
pub fn median_record(agg: &AggregateEstimate, seed: u64) -> EstimateRecord {
    if let [only] = agg.all_records.as_slice() {
        return only.clone();
    }
    let (mse_w, mse_y, mse_z) = agg.median_mse();
    EstimateRecord {
        theta_hat: agg.median_theta,
        std_error: agg.median_se,
        per_fold_thetas: Vec::new(),
        mse_w,
        mse_y,
        mse_z,
        n_trimmed: agg.all_records.iter().map(|r| r.n_trimmed).max().unwrap_or(0),
        repetition_seed: seed,
    }
}

/// Runs `method`; cross-fitted methods return their S-repetition aggregate.
pub fn run_method(method: Method, d: &Dataset, s: &Settings) -> Result<(EstimateRecord, Option<AggregateEstimate>), DmlError> {
    match method {
        Method::SimpleOls => Ok((estimate_simple_ols(d)?, None)),
        Method::Ols => Ok((estimate_ols_adjusted(d)?, None)),
        Method::NaiveGb => {
            let spec = LearnerSpec::default_for(LearnerKind::GradientBoost).with_seed(s.seed);
            Ok((estimate_naive_ml(d, &spec)?, None))
        }
        Method::Dml(kind) => {
            let cfg = DmlConfig::plr(LearnerSpec::default_for(kind))
                .with_folds(s.folds)
                .with_repetitions(s.splits)
                .with_trim(s.trim)
                .with_seed(s.seed);
            let agg = repeat_median(d, &cfg)?;
            Ok((median_record(&agg, s.seed), Some(agg)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in dml_core::simulation::ALL_METHODS {
            assert_eq!(Method::parse(name).unwrap().name(), name);
        }
        assert_eq!(Method::parse("xgboost").unwrap(), Method::Dml(LearnerKind::GradientBoost));
        assert_eq!(Method::parse("rf").unwrap().name(), "dml_rf");
        assert!(Method::parse("svm").is_err());
    }
}
