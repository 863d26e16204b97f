//! Semiparametric spatial autoregressive models with covariate-dependent
//! variance, fitted by penalized maximum likelihood.
//!
//! The model is `y = ρWy + X̃β + ω` with `ω_i ~ N(0, σ_i²)` and
//! `log σ_i = x̃_σiᵀα`, where both linear predictors may carry penalized
//! B-spline terms. Everything numerical is generic over [`Scalar`]; the
//! aliases below fix the working precision to `f64`.

mod error;
mod scalar;

pub mod effects;
pub mod estimator;
pub mod inference;
pub mod linalg;
pub mod optimize;
pub mod sim;
pub mod splines;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use estimator::{fit, fit_ml_sar, refit_fixed_rho, ConvergenceOptions, ModelSpec};

pub type WeightMatrix = weights::WeightMatrix<f64>;
pub type DataTable = estimator::DataTable<f64>;
pub type DesignMatrices = estimator::DesignMatrices<f64>;
pub type FitResult = estimator::FitResult<f64>;
pub type SmoothTermBasis = splines::SmoothTermBasis<f64>;
pub type InformationMatrix = inference::InformationMatrix<f64>;
