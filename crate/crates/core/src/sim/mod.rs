//! Monte-Carlo studies: data-generating processes, the competing estimators
//! and the replicate loop.

pub mod dgp;
pub mod study;

pub use dgp::{
    simulate_dataset, true_smooth, true_smooth_mean, CovariateSet, Dataset, EstimatorKind, Layout, Scenario,
    Simulator,
};
pub use study::{
    estimator_spec, fit_estimator, run_study, run_study_with, study_options, EstimatorReport, ParameterSummary,
    ReplicateRecord, SimulationReport,
};
