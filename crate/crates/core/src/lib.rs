//! Double/debiased machine learning for partially linear, interactive and
//! instrumental-variable models, with from-scratch first-stage learners, a
//! Monte-Carlo data-generating harness and a housing-data pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod application;
pub mod data;
pub mod dml;
pub mod error;
pub mod learners;
pub mod linalg;
pub mod metrics;
pub mod seeding;
pub mod simulation;

pub use data::{make_split, Column, ColumnRole, Dataset, SplitPlan};
pub use dml::{
    estimate, estimate_aipw, estimate_naive_ml, estimate_ols_adjusted, estimate_pliv,
    estimate_plr_dml1, estimate_plr_dml2, estimate_simple_ols, first_stage_report, repeat_median,
    AggregateEstimate, DmlConfig, EstimateRecord, Family,
};
pub use error::{DmlError, Result};
pub use learners::{fit, FittedModel, LearnerKind, LearnerSpec, TuningReport};
