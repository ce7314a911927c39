//! The pre-registered answer strategy.
//!
//! Groupwise publication rates carry Wilson intervals, differences between two
//! levels of a factor are tested with univariate logistic regressions on
//! ad-level rows, and [`run_prereg_report`] bundles everything into the report
//! directory behind a plan-hash lock.

mod logistic;
mod rates;
mod report;
mod wilson;

use thiserror::Error;

pub use logistic::{fit_logistic, Coefficient, ModelFit, SEPARATION_BOUND};
pub use rates::{groupwise_rates, GroupRate};
pub use report::{
    run_prereg_report, AnalysisPlan, Figure4Spec, HeadlineSpec, Manifest, ModelSpec, ReportBundle,
    ReportOptions, Subset,
};
pub use wilson::wilson_interval;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("{0}")]
    Usage(String),
    #[error("complete separation on `{predictor}`: level `{level}` has only {outcome} outcomes")]
    Separation {
        predictor: String,
        level: String,
        outcome: &'static str,
    },
    #[error("singular information matrix while fitting `{0}`")]
    Singular(String),
    #[error("preregistration check failed: {0}")]
    Preregistration(String),
    #[error("malformed plan: {0}")]
    Plan(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Half-up decimal rounding, rendered with exactly `places` digits.
///
/// A small relative nudge absorbs binary representation error so values such
/// as `0.125` or `94.75` round up as they would on paper.
pub fn format_fixed(x: f64, places: u32) -> String {
    let factor = 10f64.powi(places as i32);
    let scaled = x.abs() * factor;
    let rounded = (scaled * (1.0 + 4.0 * f64::EPSILON) + 0.5).floor() / factor;
    let signed = if x < 0.0 && rounded != 0.0 {
        -rounded
    } else {
        rounded
    };
    format!("{signed:.prec$}", prec = places as usize)
}
