//! H-AM-SAR estimation: designs, likelihood, scale scoring, smoothing
//! selection and the outer fitting loop.

pub mod design;
pub mod fit;
pub mod likelihood;
pub mod scale;
pub mod smoothing;

pub use design::{assemble_design, DataTable, DesignMatrices, ModelSpec, ScaleLink, SubmodelDesign, SubmodelSpec};
pub use fit::{fit, fit_ml_sar, refit_fixed_rho, ConvergenceOptions, FitFlag, FitResult, OuterStep};
pub use likelihood::{
    beta_gls, log_det_a, log_det_sigma, loglik, penalized_loglik, score_alpha, score_beta, score_rho, Theta,
};
pub use scale::update_scale_model;
