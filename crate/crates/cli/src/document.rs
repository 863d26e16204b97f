//! The fit document written by `hetsar fit` and read by `hetsar impacts`.

use hetsar::estimator::{ConvergenceOptions, FitFlag, FitResult, ModelSpec, OuterStep};
use hetsar::inference::{smooth_ci_in, wald_test, EffectiveDfs, SmoothCurve, Submodel};
use hetsar::weights::WeightMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FIT_FORMAT_VERSION: &str = "1.0";
pub const TOOL_NAME: &str = "hetsar";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTermRow {
    pub term: String,
    pub submodel: Submodel,
    pub psi: f64,
    pub edf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub rho: f64,
    /// Absent when ρ was held fixed.
    pub rho_se: Option<f64>,
    pub global_deviance: f64,
    pub penalized_loglik: f64,
    pub loglik: f64,
    pub df_mean: f64,
    pub df_scale: f64,
    pub df_error: f64,
    pub mse: f64,
}

/// The estimates themselves, with enough structure to reconstruct every
/// table above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub spec: ModelSpec,
    pub rho: f64,
    pub rho_fixed: bool,
    pub beta_names: Vec<String>,
    pub beta: Vec<f64>,
    pub alpha_names: Vec<String>,
    pub alpha: Vec<f64>,
    pub edf: EffectiveDfs<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
    pub trace: Vec<OuterStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub data_path: String,
    pub data_sha256: String,
    pub spec_sha256: String,
    pub weights_sha256: String,
    /// FNV-1a hash of the built weight matrix, hex encoded.
    pub weights_fingerprint: String,
    pub options: ConvergenceOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format_version: String,
    pub converged: bool,
    pub summary: Summary,
    pub mean_coefficients: Vec<CoefficientRow>,
    pub scale_coefficients: Vec<CoefficientRow>,
    pub smooth_terms: Vec<SmoothTermRow>,
    pub smooth_curves: Vec<SmoothCurve>,
    pub fit: FitRecord,
    pub provenance: Provenance,
}

pub fn fingerprint_hex(fingerprint: u64) -> String {
    format!("{fingerprint:016x}")
}

fn coefficient_rows(names: &[String], estimates: &[f64], se: &[f64], columns: &[usize]) -> CliResult<Vec<CoefficientRow>> {
    columns
        .iter()
        .map(|&j| {
            let test = wald_test(estimates[j], 0.0, se[j]).map_err(|_| {
                CliError::Numerical(format!("coefficient `{}` has no usable standard error", names[j]))
            })?;
            Ok(CoefficientRow {
                name: names[j].clone(),
                estimate: estimates[j],
                se: se[j],
                z: test.statistic,
                p_value: test.p_value,
            })
        })
        .collect()
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let m = points.max(2) - 1;
    // The last point is pinned to `hi`; interpolation can overshoot it by an ulp.
    (0..=m)
        .map(|k| if k == m { hi } else { (lo + (hi - lo) * k as f64 / m as f64).min(hi) })
        .collect()
}

pub struct DocumentInputs<'a> {
    pub data_path: &'a str,
    pub data_sha256: String,
    pub spec_sha256: String,
    pub weights_sha256: String,
    pub grid_points: usize,
    pub level: f64,
}

impl FitDocument {
    pub fn build(fit: &FitResult<f64>, w: &WeightMatrix<f64>, inputs: DocumentInputs<'_>) -> CliResult<Self> {
        let info = fit.fisher.as_ref().ok_or_else(|| {
            CliError::Numerical("the information matrix is singular; standard errors are unavailable".into())
        })?;
        let mean = &fit.design.mean;
        let scale = &fit.design.scale;
        let beta_names = mean.coefficient_names();
        let alpha_names = scale.coefficient_names();
        let beta: Vec<f64> = fit.beta.iter().copied().collect();
        let alpha: Vec<f64> = fit.alpha.iter().copied().collect();
        let se_beta: Vec<f64> = info.se_beta().iter().copied().collect();
        let se_alpha: Vec<f64> = info.se_alpha().iter().copied().collect();
        let mean_coefficients = coefficient_rows(&beta_names, &beta, &se_beta, &mean.unpenalized_columns())?;
        let scale_coefficients = coefficient_rows(&alpha_names, &alpha, &se_alpha, &scale.unpenalized_columns())?;

        let mut smooth_terms = Vec::new();
        let mut smooth_curves = Vec::new();
        for (submodel, design, blocks) in [
            (Submodel::Mean, mean, &fit.edf.mean_blocks),
            (Submodel::Scale, scale, &fit.edf.scale_blocks),
        ] {
            for penalty in &design.penalties {
                let Some((_, basis)) = design.smooth(&penalty.label) else {
                    continue;
                };
                let edf = blocks
                    .iter()
                    .find(|(label, _)| *label == penalty.label)
                    .map_or(f64::NAN, |(_, d)| *d);
                smooth_terms.push(SmoothTermRow {
                    term: penalty.label.clone(),
                    submodel,
                    psi: penalty.psi,
                    edf,
                });
                let (lo, hi) = basis.span();
                smooth_curves.push(smooth_ci_in(
                    fit,
                    submodel,
                    &penalty.label, &grid(lo, hi, inputs.grid_points), inputs.level)?);
            }
        }

        let rho_se = if fit.rho_fixed { None } else { info.se_rho() };
        let summary = Summary {
            n: fit.y.len(),
            rho: fit.rho,
            rho_se,
            global_deviance: fit.global_deviance,
            penalized_loglik: fit.penalized_loglik,
            loglik: fit.loglik,
            df_mean: fit.edf.mean,
            df_scale: fit.edf.scale,
            df_error: fit.edf.error,
            mse: fit.mse(w),
        };
        Ok(FitDocument {
            format_version: FIT_FORMAT_VERSION.to_string(),
            converged: fit.converged,
            summary,
            mean_coefficients,
            scale_coefficients,
            smooth_terms,
            smooth_curves,
            fit: FitRecord {
                spec: fit.spec.clone(),
                rho: fit.rho,
                rho_fixed: fit.rho_fixed,
                beta_names,
                beta,
                alpha_names,
                alpha,
                edf: fit.edf.clone(),
                iterations: fit.iterations,
                converged: fit.converged,
                flags: fit.flags.clone(),
                trace: fit.trace.clone(),
            },
            provenance: Provenance {
                tool: TOOL_NAME.to_string(),
                tool_version: TOOL_VERSION.to_string(),
                data_path: inputs.data_path.to_string(),
                data_sha256: inputs.data_sha256,
                spec_sha256: inputs.spec_sha256,
                weights_sha256: inputs.weights_sha256,
                weights_fingerprint: fingerprint_hex(fit.weights_fingerprint),
                options: fit.options.clone(),
            },
        })
    }

    /// Estimate of a mean coefficient by name.
    pub fn mean_coefficient(&self, name: &str) -> Option<f64> {
        let i = self.fit.beta_names.iter().position(|n| n == name)?;
        Some(self.fit.beta[i])
    }
}
