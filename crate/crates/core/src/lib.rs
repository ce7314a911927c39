//! Toolkit for running audit studies of platform decision systems.
//!
//! The pipeline runs in the order the modules are listed:
//!
//! * [`design`] declares a nested factorial design and enumerates its cells.
//! * [`diagnosis`] simulates hypothetical studies to estimate power per
//!   candidate sample size.
//! * [`ingest`] loads subject fixtures and builds per-cell subject pools.
//! * [`prompts`] renders ad creatives and the full prompt set.
//! * [`allocation`] binds prompts to testers with per-stratum balance.
//! * [`ledger`] is the hash-chained, append-only record of assignments and
//!   platform decisions.
//! * [`analysis`] is the pre-registered answer strategy: Wilson intervals,
//!   univariate logistic fits and the report bundle.

pub mod allocation;
pub mod analysis;
pub mod dataset;
pub mod design;
pub mod diagnosis;
pub mod hash;
pub mod ingest;
pub mod ledger;
pub mod prompts;
pub mod rng;
pub mod stats;

pub use allocation::{allocate, Assignment, AssignmentStatus, Tester};
pub use analysis::{
    fit_logistic, groupwise_rates, run_prereg_report, wilson_interval, AnalysisPlan, GroupRate,
    ModelFit,
};
pub use dataset::{AnalysisTable, DataRow};
pub use design::{enumerate_cells, validate_design, AuditDesign, Cell, Factor};
pub use diagnosis::{estimate_power, recommend_sample_size, simulate_study, DecisionModel};
pub use ingest::{SubjectKind, SubjectPool, SubjectRecord};
pub use ledger::{Decision, Ledger, Observation};
pub use prompts::{AdCreative, Platform, PromptSpec};

/// Tool version recorded in report manifests.
pub const TOOL_VERSION: &str = concat!("auditkit ", env!("CARGO_PKG_VERSION"));
