//! Fisher scoring for the scale (log-σ) submodel.

use nalgebra::DVector;

use super::design::SubmodelDesign;
use super::likelihood::{scale_predictor, scale_score, ScalePredictor};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleOptions<T> {
    pub score_tol: T,
    pub max_iter: usize,
    pub clamp: T,
}

impl<T: Scalar> Default for ScaleOptions<T> {
    fn default() -> Self {
        Self {
            score_tol: T::lit(1e-8),
            max_iter: 100,
            clamp: T::lit(super::likelihood::DEFAULT_CLAMP),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFit<T: Scalar> {
    pub alpha: DVector<T>,
    pub predictor: ScalePredictor<T>,
    pub iterations: usize,
    pub score_norm: T,
}

/// Expected information of the scale coefficients: `2 X̃_σᵀX̃_σ + Σψ₂G₂`.
pub fn scale_information<T: Scalar>(scale: &SubmodelDesign<T>) -> nalgebra::DMatrix<T> {
    scale.x.transpose() * &scale.x * T::lit(2.0) + scale.penalty_matrix()
}

/// Scale part of `ℓ_p` given mean residuals.
pub fn scale_objective<T: Scalar>(
    scale: &SubmodelDesign<T>,
    residuals: &DVector<T>,
    alpha: &DVector<T>,
    pred: &ScalePredictor<T>,
) -> T {
    let half = T::lit(0.5);
    let ll = residuals
        .iter()
        .zip(pred.eta.iter())
        .zip(pred.sigma.iter())
        .fold(T::zero(), |acc, ((&r, &eta), &s)| acc - eta - half * (r / s) * (r / s));
    ll - half * scale.penalty_quadratic(alpha)
}

/// Maximizes the scale part of `ℓ_p` over `α` for fixed residuals by Fisher
/// scoring, `α ← α + I_αα⁻¹ ∂ℓ_p/∂α`, halving steps that do not improve the
/// objective. Stops once the score norm drops below `score_tol`.
pub fn update_scale_model<T: Scalar>(
    residuals: &DVector<T>,
    scale: &SubmodelDesign<T>,
    alpha_init: &DVector<T>,
    options: &ScaleOptions<T>,
) -> Result<ScaleFit<T>> {
    if residuals.len() != scale.nrows() || alpha_init.len() != scale.ncols() {
        return Err(Error::DimensionMismatch {
            what: "scale model inputs",
            expected: scale.nrows(),
            found: residuals.len(),
        });
    }
    if let Some(row) = residuals.iter().position(|r| !r.is_finite_value()) {
        return Err(Error::NonFinite {
            column: "residuals".into(),
            row,
        });
    }
    let info = SpdFactor::new(&scale_information(scale), "scale information")?;
    let mut alpha = alpha_init.clone();
    let mut pred = scale_predictor(scale, &alpha, options.clamp);
    let mut obj = scale_objective(scale, residuals, &alpha, &pred);
    let mut score = scale_score(scale, residuals, &alpha, &pred);
    let mut iterations = 0;
    while score.norm() >= options.score_tol {
        if iterations >= options.max_iter {
            return Err(Error::ScaleNotConverged {
                iterations,
                score_norm: score.norm().as_f64(),
            });
        }
        iterations += 1;
        let step = info.solve(&score);
        let mut t = T::one();
        let mut accepted = false;
        // Near the optimum the gain from a step falls below the rounding of
        // the objective itself, so changes inside that noise count as ties.
        let noise = T::lit(64.0 * f64::EPSILON) * (T::one() + obj.abs());
        for _ in 0..30 {
            let cand = &alpha + &step * t;
            let cand_pred = scale_predictor(scale, &cand, options.clamp);
            let cand_obj = scale_objective(scale, residuals, &cand, &cand_pred);
            if cand_obj >= obj - noise || !obj.is_finite_value() {
                alpha = cand;
                pred = cand_pred;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= T::lit(0.5);
        }
        score = scale_score(scale, residuals, &alpha, &pred);
        if !accepted {
            // No ascent direction left at working precision.
            let rel = score.norm() / (T::one() + obj.abs());
            if rel < T::lit(1e-10) {
                break;
            }
            return Err(Error::ScaleNotConverged {
                iterations,
                score_norm: score.norm().as_f64(),
            });
        }
    }
    Ok(ScaleFit {
        score_norm: score.norm(),
        alpha,
        predictor: pred,
        iterations,
    })
}
