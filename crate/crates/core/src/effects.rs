//! Direct, indirect and total impacts of linear mean terms, and Moran's I.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::design::TermKind;
use crate::estimator::fit::FitResult;
use crate::inference::spatial_inverse;
use crate::weights::WeightMatrix;
use crate::Scalar;

/// Largest `n` for which the dense `(I - ρW)⁻¹` is formed.
pub const MAX_IMPACT_UNITS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub variable: String,
    pub coefficient: f64,
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
}

/// Impacts of `S = β(I - ρW)⁻¹`: direct is the mean diagonal, total the mean
/// row sum and indirect the difference.
pub fn impact_decomposition<T: Scalar>(
    variable: &str,
    rho: T,
    coefficient: T,
    w: &WeightMatrix<T>,
) -> Result<ImpactSummary> {
    let n = w.n();
    if n > MAX_IMPACT_UNITS {
        return Err(Error::InvalidArgument(format!(
            "impacts need a dense inverse; n = {n} exceeds {MAX_IMPACT_UNITS}"
        )));
    }
    let inv = spatial_inverse(rho, w)?;
    let nf = T::from_usize_lossy(n);
    let diag = inv.diagonal().sum() / nf;
    let rows = inv.sum() / nf;
    let direct = (coefficient * diag).as_f64();
    let total = (coefficient * rows).as_f64();
    Ok(ImpactSummary {
        variable: variable.to_string(),
        coefficient: coefficient.as_f64(),
        direct,
        indirect: total - direct,
        total,
    })
}

/// Impacts of a linear mean term of a fitted model.
pub fn impacts<T: Scalar>(fit: &FitResult<T>, w: &WeightMatrix<T>, variable: &str) -> Result<ImpactSummary> {
    let mean = &fit.design.mean;
    let term = match mean.terms.iter().find(|t| t.label == variable || t.variable.as_deref() == Some(variable)) {
        Some(t) => t,
        None if fit.design.scale.term(variable).is_some() || fit.design.scale.smooth(variable).is_some() => {
            return Err(Error::UnsupportedTerm {
                term: variable.to_string(),
                reason: "scale-model terms have no mean impact".into(),
            })
        }
        None => return Err(Error::UnknownTerm(variable.to_string())),
    };
    match term.kind {
        TermKind::Linear => {}
        TermKind::Smooth => {
            return Err(Error::UnsupportedTerm {
                term: term.label.clone(),
                reason: "impacts of smooth terms are not defined here".into(),
            })
        }
        TermKind::Intercept => {
            return Err(Error::UnsupportedTerm {
                term: term.label.clone(),
                reason: "the intercept has no marginal effect".into(),
            })
        }
    }
    impact_decomposition(&term.label, fit.rho, fit.beta[term.columns.start], w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub statistic: f64,
    pub expected: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub seed: u64,
    pub scatter: Vec<(f64, f64)>,
}

pub const MIN_PERMUTATIONS: usize = 99;

fn centered<T: Scalar>(values: &DVector<T>) -> Result<DVector<T>> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "Moran's I needs at least 3 units, got {}",
            values.len()
        )));
    }
    if let Some(row) = values.iter().position(|v| !v.is_finite_value()) {
        return Err(Error::NonFinite {
            column: "values".into(),
            row,
        });
    }
    let mean = values.sum() / T::from_usize_lossy(values.len());
    let z = values.map(|v| v - mean);
    let scale = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if z.norm() <= T::lit(1e-12) * (T::one() + scale) * T::from_usize_lossy(values.len()).sqrt() {
        return Err(Error::ZeroVariance);
    }
    Ok(z)
}

fn moran_statistic<T: Scalar>(z: &DVector<T>, wz: &DVector<T>, n_over_s0: T) -> T {
    n_over_s0 * z.dot(wz) / z.dot(z)
}

/// Centered values paired with their spatial lags, `(z_i, Σ_j w_ij z_j)`.
pub fn moran_scatter<T: Scalar>(values: &DVector<T>, w: &WeightMatrix<T>) -> Result<Vec<(f64, f64)>> {
    check_len(values, w)?;
    let z = centered(values)?;
    let lag = w.mul_vec(&z);
    Ok(z.iter().zip(lag.iter()).map(|(a, b)| (a.as_f64(), b.as_f64())).collect())
}

fn check_len<T: Scalar>(values: &DVector<T>, w: &WeightMatrix<T>) -> Result<()> {
    if values.len() != w.n() {
        return Err(Error::DimensionMismatch {
            what: "values",
            expected: w.n(),
            found: values.len(),
        });
    }
    Ok(())
}

/// `I = (n/S₀)·zᵀWz/zᵀz` with a one-sided (greater) permutation p-value
/// `(1 + #{I_perm ≥ I})/(permutations + 1)`. Permutation `k` shuffles with its
/// own ChaCha8 stream `(seed, k)`, so the result does not depend on thread
/// scheduling.
pub fn morans_i<T: Scalar>(
    values: &DVector<T>,
    w: &WeightMatrix<T>,
    permutations: usize,
    seed: u64,
) -> Result<MoranResult> {
    check_len(values, w)?;
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_PERMUTATIONS} permutations are required, got {permutations}"
        )));
    }
    let z = centered(values)?;
    let n = z.len();
    let n_over_s0 = T::from_usize_lossy(n) / w.total_weight();
    let wz = w.mul_vec(&z);
    let stat = moran_statistic(&z, &wz, n_over_s0);
    let base: Vec<T> = z.iter().copied().collect();
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut perm = base.clone();
            perm.shuffle(&mut rng);
            let zp = DVector::from_vec(perm);
            let s = moran_statistic(&zp, &w.mul_vec(&zp), n_over_s0);
            usize::from(s >= stat)
        })
        .sum();
    let scatter = z.iter().zip(wz.iter()).map(|(a, b)| (a.as_f64(), b.as_f64())).collect();
    Ok(MoranResult {
        statistic: stat.as_f64(),
        expected: -1.0 / (n as f64 - 1.0),
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
        permutations,
        seed,
        scatter,
    })
}
