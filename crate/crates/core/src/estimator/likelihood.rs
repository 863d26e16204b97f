//! Penalized log-likelihood, its analytic scores and the closed-form β̂.

use nalgebra::{DMatrix, DVector};

use super::design::{DesignMatrices, SubmodelDesign};
use crate::error::{Error, Result};
use crate::linalg::{weighted_cross, weighted_gram, SpdFactor};
use crate::weights::WeightMatrix;
use crate::Scalar;

/// Default bound on the scale linear predictor before exponentiation.
pub const DEFAULT_CLAMP: f64 = 15.0;

/// Parameter vector `θ = (ρ, β, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta<T: Scalar> {
    pub rho: T,
    pub beta: DVector<T>,
    pub alpha: DVector<T>,
}

/// Scale predictor `η = X̃_σ α` clamped to `[-clamp, clamp]`, and `σ = exp(η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePredictor<T: Scalar> {
    pub eta: DVector<T>,
    pub sigma: DVector<T>,
    /// Rows where the clamp was active.
    pub clamped: Vec<usize>,
}

pub fn scale_predictor<T: Scalar>(
    design: &SubmodelDesign<T>,
    alpha: &DVector<T>,
    clamp: T,
) -> ScalePredictor<T> {
    let raw = &design.x * alpha;
    let mut clamped = Vec::new();
    let eta = DVector::from_iterator(
        raw.len(),
        raw.iter().enumerate().map(|(i, &v)| {
            if v > clamp || v < -clamp || !v.is_finite_value() {
                clamped.push(i);
            }
            if v > clamp {
                clamp
            } else if v < -clamp {
                -clamp
            } else if v.is_finite_value() {
                v
            } else {
                clamp
            }
        }),
    );
    let sigma = eta.map(|e| e.exp());
    ScalePredictor {
        eta,
        sigma,
        clamped,
    }
}

/// `ln|Σ|` for `Σ = diag(σ²)`. The Cholesky factor of a diagonal `Σ` is
/// `diag(σ)`, so `ln|Σ| = 2 Σ ln σ_i`.
pub fn log_det_sigma<T: Scalar>(sigma: &DVector<T>) -> Result<T> {
    let two = T::lit(2.0);
    sigma.iter().enumerate().try_fold(T::zero(), |acc, (index, &s)| {
        if s > T::zero() && s.is_finite_value() {
            Ok(acc + two * s.ln())
        } else {
            Err(Error::NonPositiveSigma {
                index,
                value: s.as_f64(),
            })
        }
    })
}

fn inadmissible<T: Scalar>(rho: T, w: &WeightMatrix<T>) -> Error {
    let s = w.spectrum();
    Error::InadmissibleRho {
        rho: rho.as_f64(),
        lo: s.rho_lo.as_f64(),
        hi: s.rho_hi.as_f64(),
    }
}

/// `ln|I - ρW| = Σ ln(1 - ρλ_i)` from real eigenvalues.
pub fn log_det_a_eigen<T: Scalar>(rho: T, eigenvalues: &[T]) -> Option<T> {
    eigenvalues.iter().try_fold(T::zero(), |acc, &l| {
        let f = T::one() - rho * l;
        (f > T::zero()).then(|| acc + f.ln())
    })
}

/// `ln|I - ρW|` from a dense LU factorization.
pub fn log_det_a_lu<T: Scalar>(rho: T, w: &WeightMatrix<T>) -> Result<T> {
    let n = w.n();
    let a = DMatrix::<T>::identity(n, n) - w.to_dense() * rho;
    let lu = a.lu();
    let u = lu.u();
    let mut sign = T::one();
    let mut acc = T::zero();
    for i in 0..n {
        let d = u[(i, i)];
        if d == T::zero() {
            return Err(inadmissible(rho, w));
        }
        if d < T::zero() {
            sign = -sign;
        }
        acc += d.abs().ln();
    }
    // Row swaps flip the sign of the determinant.
    if lu.p().determinant::<T>() < T::zero() {
        sign = -sign;
    }
    if sign <= T::zero() {
        return Err(inadmissible(rho, w));
    }
    Ok(acc)
}

/// `ln|A|` for `A = I - ρW`, by eigenvalues when they are available and by
/// LU otherwise.
pub fn log_det_a<T: Scalar>(rho: T, w: &WeightMatrix<T>) -> Result<T> {
    match &w.spectrum().eigenvalues {
        Some(ev) => log_det_a_eigen(rho, ev).ok_or_else(|| inadmissible(rho, w)),
        None => log_det_a_lu(rho, w),
    }
}

/// `tr(A⁻¹ W)`, the derivative of `-ln|A|` in ρ.
pub fn trace_a_inv_w<T: Scalar>(rho: T, w: &WeightMatrix<T>) -> Result<T> {
    match &w.spectrum().eigenvalues {
        Some(ev) => Ok(ev
            .iter()
            .fold(T::zero(), |acc, &l| acc + l / (T::one() - rho * l))),
        None => {
            let n = w.n();
            let wd = w.to_dense();
            let a = DMatrix::<T>::identity(n, n) - &wd * rho;
            let sol = a.lu().solve(&wd).ok_or_else(|| inadmissible(rho, w))?;
            Ok(sol.trace())
        }
    }
}

/// Penalized normal matrix `X̃ᵀΣ⁻¹X̃ + Σψ G` and `X̃ᵀΣ⁻¹` weights.
pub(crate) fn mean_normal_matrix<T: Scalar>(
    design: &SubmodelDesign<T>,
    inv_var: &DVector<T>,
) -> DMatrix<T> {
    weighted_gram(&design.x, inv_var) + design.penalty_matrix()
}

pub(crate) fn inverse_variance<T: Scalar>(sigma: &DVector<T>) -> DVector<T> {
    sigma.map(|s| T::one() / (s * s))
}

/// `β̂ = (X̃ᵀΣ⁻¹X̃ + Σψ G)⁻¹ X̃ᵀΣ⁻¹ Ay`.
pub fn beta_gls<T: Scalar>(
    design: &SubmodelDesign<T>,
    sigma: &DVector<T>,
    ay: &DVector<T>,
) -> Result<DVector<T>> {
    if sigma.len() != design.nrows() || ay.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            what: "beta_gls inputs",
            expected: design.nrows(),
            found: sigma.len().min(ay.len()),
        });
    }
    let inv_var = inverse_variance(sigma);
    let factor = SpdFactor::new(&mean_normal_matrix(design, &inv_var), "penalized normal equations")?;
    Ok(factor.solve(&weighted_cross(&design.x, &inv_var, ay)))
}

/// Quantities shared by the likelihood and its scores at one θ.
struct Evaluation<T: Scalar> {
    wy: DVector<T>,
    resid: DVector<T>,
    pred: ScalePredictor<T>,
}

fn evaluate<T: Scalar>(
    theta: &Theta<T>,
    design: &DesignMatrices<T>,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<Evaluation<T>> {
    let n = design.nobs();
    if y.len() != n || w.n() != n {
        return Err(Error::DimensionMismatch {
            what: "response / weights",
            expected: n,
            found: if y.len() != n { y.len() } else { w.n() },
        });
    }
    if theta.beta.len() != design.mean.ncols() {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: design.mean.ncols(),
            found: theta.beta.len(),
        });
    }
    if theta.alpha.len() != design.scale.ncols() {
        return Err(Error::DimensionMismatch {
            what: "alpha",
            expected: design.scale.ncols(),
            found: theta.alpha.len(),
        });
    }
    let wy = w.mul_vec(y);
    let resid = y - &wy * theta.rho - &design.mean.x * &theta.beta;
    let pred = scale_predictor(&design.scale, &theta.alpha, clamp);
    Ok(Evaluation { wy, resid, pred })
}

fn ln_2pi<T: Scalar>() -> T {
    T::lit((2.0 * std::f64::consts::PI).ln())
}

/// Log-likelihood without the penalty:
/// `-(n/2)ln(2π) - ½ln|Σ| + ln|A| - ½ vᵀv`.
pub fn loglik<T: Scalar>(
    theta: &Theta<T>,
    design: &DesignMatrices<T>,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<T> {
    let ev = evaluate(theta, design, w, y, clamp)?;
    let half = T::lit(0.5);
    let n = T::from_usize_lossy(design.nobs());
    let vtv = ev
        .resid
        .iter()
        .zip(ev.pred.sigma.iter())
        .fold(T::zero(), |acc, (&r, &s)| acc + (r / s) * (r / s));
    Ok(-half * n * ln_2pi::<T>() - half * log_det_sigma(&ev.pred.sigma)? + log_det_a(theta.rho, w)?
        - half * vtv)
}

/// `ℓ_p = ℓ - ½(βᵀ[Σψ₁G₁]β + Σ αⱼᵀψ₂ⱼG₂ⱼαⱼ)`.
pub fn penalized_loglik<T: Scalar>(
    theta: &Theta<T>,
    design: &DesignMatrices<T>,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<T> {
    let l = loglik(theta, design, w, y, clamp)?;
    Ok(l - T::lit(0.5)
        * (design.mean.penalty_quadratic(&theta.beta) + design.scale.penalty_quadratic(&theta.alpha)))
}

/// `∂ℓ_p/∂β = X̃ᵀΣ⁻¹(Ay - X̃β) - Σψ₁G₁β`.
pub fn score_beta<T: Scalar>(
    theta: &Theta<T>,
    design: &DesignMatrices<T>,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<DVector<T>> {
    let ev = evaluate(theta, design, w, y, clamp)?;
    let inv_var = inverse_variance(&ev.pred.sigma);
    Ok(weighted_cross(&design.mean.x, &inv_var, &ev.resid) - design.mean.penalty_matrix() * &theta.beta)
}

/// `∂ℓ_p/∂ρ = -tr(A⁻¹W) + vᵀΣ^{-1/2} W y`.
pub fn score_rho<T: Scalar>(
    theta: &Theta<T>,
    design: &DesignMatrices<T>,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<T> {
    let ev = evaluate(theta, design, w, y, clamp)?;
    let quad = ev
        .resid
        .iter()
        .zip(ev.pred.sigma.iter())
        .zip(ev.wy.iter())
        .fold(T::zero(), |acc, ((&r, &s), &wy)| acc + r * wy / (s * s));
    Ok(quad - trace_a_inv_w(theta.rho, w)?)
}

/// Score of the scale coefficients given mean residuals `r = Ay - X̃β`.
///
/// With `σ_i = exp(η_i)` and `H_m = diag(∂σ_i²/∂α_m) = diag(2σ_i² x_im)`, the
/// score is `-½tr(Σ⁻¹H_m) + ½ rᵀΣ⁻¹H_mΣ⁻¹r - (Σψ₂G₂ α)_m`, i.e.
/// `Σ_i x_im (r_i²/σ_i² - 1) - (Σψ₂G₂ α)_m`. Rows where the clamp is
/// active contribute nothing.
pub fn scale_score<T: Scalar>(
    scale: &SubmodelDesign<T>,
    residuals: &DVector<T>,
    alpha: &DVector<T>,
    pred: &ScalePredictor<T>,
) -> DVector<T> {
    let mut u = DVector::from_iterator(
        residuals.len(),
        residuals
            .iter()
            .zip(pred.sigma.iter())
            .map(|(&r, &s)| (r / s) * (r / s) - T::one()),
    );
    for &i in &pred.clamped {
        u[i] = T::zero();
    }
    scale.x.transpose() * u - scale.penalty_matrix() * alpha
}

/// `∂ℓ_p/∂α`.
pub fn score_alpha<T: Scalar>(
    theta: &Theta<T>,
    design: &DesignMatrices<T>,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<DVector<T>> {
    let ev = evaluate(theta, design, w, y, clamp)?;
    Ok(scale_score(&design.scale, &ev.resid, &theta.alpha, &ev.pred))
}
