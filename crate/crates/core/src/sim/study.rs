//! Estimators compared in the studies and the replicate loop.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{true_smooth_mean, Dataset, EstimatorKind, Scenario, Simulator};
use crate::error::{Error, Result};
use crate::estimator::{fit, fit_ml_sar, ConvergenceOptions, DataTable, FitResult, ModelSpec};
use crate::splines::SmoothConfig;
use crate::weights::WeightMatrix;

pub const REPORT_FORMAT_VERSION: &str = "1.0";
pub const RNG_DESCRIPTION: &str =
    "ChaCha8Rng (rand_chacha 0.9) seeded with the scenario seed; replicate r uses stream r, points use stream 2^64-1";

/// Column holding `Wy` for the GAMLSS-lag baseline.
pub const LAG_COLUMN: &str = "Wy";

fn smooth_x3(num_basis: usize) -> SmoothConfig {
    SmoothConfig {
        num_basis,
        ..SmoothConfig::new("x3")
    }
}

/// Model spec an estimator fits to the simulated columns.
pub fn estimator_spec(kind: EstimatorKind, num_basis: usize) -> ModelSpec {
    let base = ModelSpec::new("y");
    match kind {
        EstimatorKind::HAmSar => base
            .mean_linear(&["x1", "x2"])
            .mean_smooth(smooth_x3(num_basis))
            .scale_linear(&["x2"]),
        EstimatorKind::MlSar => base.mean_linear(&["x1", "x2", "x3"]),
        EstimatorKind::AmSar => base.mean_linear(&["x1", "x2"]).mean_smooth(smooth_x3(num_basis)),
        EstimatorKind::GamlssLag => base
            .mean_linear(&[LAG_COLUMN, "x1", "x2"])
            .mean_smooth(smooth_x3(num_basis))
            .scale_linear(&["x2"]),
    }
}

/// A baseline or the proposed estimator applied to one data set. The
/// GAMLSS-lag fit holds ρ at 0, adds `Wy` as a regressor and reports its
/// coefficient as ρ̂.
pub fn fit_estimator(
    kind: EstimatorKind,
    data: &DataTable<f64>,
    w: &WeightMatrix<f64>,
    num_basis: usize,
    options: &ConvergenceOptions,
) -> Result<FitResult<f64>> {
    match kind {
        EstimatorKind::MlSar => fit_ml_sar("y", &["x1", "x2", "x3"], data, w, options),
        EstimatorKind::HAmSar | EstimatorKind::AmSar => fit(&estimator_spec(kind, num_basis), data, w, options),
        EstimatorKind::GamlssLag => {
            let mut augmented = data.clone();
            augmented.insert(LAG_COLUMN, w.mul_vec(data.column("y")?))?;
            let opts = ConvergenceOptions {
                fix_rho: Some(0.0),
                ..options.clone()
            };
            fit(&estimator_spec(kind, num_basis), &augmented, w, &opts)
        }
    }
}

/// Estimates recorded for one replicate, in the reporting convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    pub iterations: usize,
}

impl ReplicateRecord {
    fn failed(replicate: usize, error: String) -> Self {
        Self {
            replicate,
            converged: false,
            error: Some(error),
            rho: None,
            beta0: None,
            beta1: None,
            beta2: None,
            alpha0: None,
            alpha1: None,
            mse: None,
            iterations: 0,
        }
    }

    fn usable(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

/// Pulls the reported quantities out of a fit.
pub fn record_fit(
    kind: EstimatorKind,
    replicate: usize,
    fit: &FitResult<f64>,
    w: &WeightMatrix<f64>,
    scenario: &Scenario,
) -> ReplicateRecord {
    let rho = match kind {
        EstimatorKind::GamlssLag => fit.mean_coefficient(LAG_COLUMN),
        _ => Some(fit.rho),
    };
    // GAMLSS-lag's conditional mean includes the lag regressor.
    let mse = Some(fit.mse(w));
    ReplicateRecord {
        replicate,
        converged: fit.converged,
        error: None,
        rho,
        beta0: fit.mean_coefficient(crate::estimator::design::INTERCEPT),
        beta1: fit.mean_coefficient("x1"),
        beta2: fit.mean_coefficient("x2"),
        alpha0: fit.scale_coefficient(crate::estimator::design::INTERCEPT),
        alpha1: fit.scale_coefficient("x2").map(|s| s / scenario.alpha1_sign),
        mse,
        iterations: fit.iterations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub true_value: f64,
    pub count: usize,
    pub mean: f64,
    /// Absent with fewer than two usable replicates.
    pub sd: Option<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: EstimatorKind,
    pub parameters: Vec<ParameterSummary>,
    /// In-sample MSE by replicate; `None` where the fit failed.
    pub mse: Vec<Option<f64>>,
    pub failures: usize,
    pub replicates: Vec<ReplicateRecord>,
}

impl EstimatorReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.parameter == name)
    }

    pub fn median_mse(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .replicates
            .iter()
            .filter(|r| r.usable())
            .filter_map(|r| r.mse)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub format_version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub rng: String,
    pub n: usize,
    /// `β₀ + E f(x₃)`, the target of the intercept once the smooth is centered.
    pub intercept_target: f64,
    pub estimators: Vec<EstimatorReport>,
}

impl SimulationReport {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }
}

fn summarize(name: &str, true_value: f64, values: &[f64]) -> Option<ParameterSummary> {
    if values.is_empty() {
        return None;
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let sd = (count > 1).then(|| {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
    });
    Some(ParameterSummary {
        parameter: name.to_string(),
        true_value,
        count,
        mean,
        sd,
        bias: mean - true_value,
    })
}

fn aggregate(kind: EstimatorKind, scenario: &Scenario, records: Vec<ReplicateRecord>) -> Result<EstimatorReport> {
    let usable: Vec<&ReplicateRecord> = records.iter().filter(|r| r.usable()).collect();
    if usable.is_empty() {
        return Err(Error::AllReplicatesFailed(kind.label().to_string()));
    }
    let intercept_target = scenario.beta0 + true_smooth_mean();
    let fields: [(&str, f64, fn(&ReplicateRecord) -> Option<f64>); 6] = [
        ("rho", scenario.rho, |r| r.rho),
        ("beta0", intercept_target, |r| r.beta0),
        ("beta1", scenario.beta1, |r| r.beta1),
        ("beta2", scenario.beta2, |r| r.beta2),
        ("alpha0", scenario.alpha0, |r| r.alpha0),
        ("alpha1", scenario.alpha1, |r| r.alpha1),
    ];
    let parameters = fields
        .iter()
        .filter_map(|(name, truth, get)| {
            let values: Vec<f64> = usable.iter().filter_map(|r| get(r)).collect();
            summarize(name, *truth, &values)
        })
        .collect();
    Ok(EstimatorReport {
        estimator: kind,
        parameters,
        mse: records.iter().map(|r| r.usable().then_some(r.mse).flatten()).collect(),
        failures: records.len() - usable.len(),
        replicates: records,
    })
}

/// Options used for fits inside a study: no information matrix, since the
/// report only needs point estimates.
pub fn study_options() -> ConvergenceOptions {
    ConvergenceOptions {
        compute_information: false,
        ..ConvergenceOptions::default()
    }
}

/// Runs every replicate of a scenario (in parallel on the current rayon
/// pool) and aggregates per estimator. Replicate `r` draws from its own
/// stream, so the report does not depend on the thread count.
pub fn run_study(scenario: &Scenario, base_dir: &Path) -> Result<SimulationReport> {
    run_study_with(scenario, base_dir, &study_options(), |_, _| {})
}

/// As [`run_study`], with explicit fit options and a hook that sees every
/// simulated data set (used to dump replicates to disk).
pub fn run_study_with<H>(
    scenario: &Scenario,
    base_dir: &Path,
    options: &ConvergenceOptions,
    hook: H,
) -> Result<SimulationReport>
where
    H: Fn(usize, &Dataset) + Sync,
{
    let sim = Simulator::new(scenario.clone(), base_dir)?;
    // Warm the cached spectrum once before the threads share the matrix.
    let _ = sim.weights.spectrum();
    let mut estimators = scenario.estimators.clone();
    estimators.dedup();
    let per_replicate: Vec<Vec<ReplicateRecord>> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| match sim.simulate(r) {
            Ok(data) => {
                hook(r, &data);
                estimators
                    .iter()
                    .map(|&kind| {
                        match fit_estimator(kind, &data.data, &sim.weights, scenario.num_basis, options) {
                            Ok(f) => record_fit(kind, r, &f, &sim.weights, scenario),
                            Err(e) => ReplicateRecord::failed(r, e.to_string()),
                        }
                    })
                    .collect()
            }
            Err(e) => estimators
                .iter()
                .map(|_| ReplicateRecord::failed(r, e.to_string()))
                .collect(),
        })
        .collect();
    let mut reports = Vec::with_capacity(estimators.len());
    for (k, &kind) in estimators.iter().enumerate() {
        let records: Vec<ReplicateRecord> = per_replicate.iter().map(|v| v[k].clone()).collect();
        reports.push(aggregate(kind, scenario, records)?);
    }
    Ok(SimulationReport {
        format_version: REPORT_FORMAT_VERSION.to_string(),
        scenario: scenario.clone(),
        seed: scenario.seed,
        rng: RNG_DESCRIPTION.to_string(),
        n: sim.n(),
        intercept_target: scenario.beta0 + true_smooth_mean(),
        estimators: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_moments() {
        let s = summarize("rho", 0.5, &[0.4, 0.6, 0.5]).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-15);
        assert!((s.sd.unwrap() - 0.1).abs() < 1e-12);
        assert!((s.bias - (s.mean - s.true_value)).abs() < 1e-12);
        assert!(summarize("rho", 0.0, &[0.3]).unwrap().sd.is_none());
        assert!(summarize("rho", 0.0, &[]).is_none());
    }

    #[test]
    fn all_failed_is_error() {
        let s = Scenario::grid(3, 3, 0.0);
        let recs = vec![ReplicateRecord::failed(0, "x".into())];
        assert!(matches!(aggregate(EstimatorKind::MlSar, &s, recs), Err(Error::AllReplicatesFailed(_))));
    }

    #[test]
    fn median_of_even_and_odd() {
        let mk = |mse: f64| ReplicateRecord {
            mse: Some(mse),
            converged: true,
            ..ReplicateRecord::failed(0, String::new())
        };
        let mut recs: Vec<ReplicateRecord> = [3.0, 1.0, 2.0].into_iter().map(mk).collect();
        for r in &mut recs {
            r.error = None;
        }
        let rep = EstimatorReport {
            estimator: EstimatorKind::MlSar,
            parameters: vec![],
            mse: vec![],
            failures: 0,
            replicates: recs.clone(),
        };
        assert_eq!(rep.median_mse(), Some(2.0));
        let mut four = recs;
        four.push(ReplicateRecord {
            mse: Some(10.0),
            converged: true,
            error: None,
            ..ReplicateRecord::failed(0, String::new())
        });
        let rep = EstimatorReport { replicates: four, ..rep };
        assert_eq!(rep.median_mse(), Some(2.5));
    }
}
