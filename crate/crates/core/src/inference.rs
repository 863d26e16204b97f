//! Expected information, standard errors, Wald / likelihood-ratio tests,
//! pointwise bands for smooth terms and effective degrees of freedom.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::design::{DesignMatrices, SubmodelDesign, TermKind};
use crate::estimator::fit::{weights_fingerprint, FitResult};
use crate::estimator::likelihood::inverse_variance;
use crate::linalg::{symmetrize, weighted_gram, SpdFactor};
use crate::weights::WeightMatrix;
use crate::Scalar;

/// Expected information over the ordered groups (β, ρ, α). When ρ was held
/// fixed the ρ row and column are left out.
#[derive(Debug, Clone)]
pub struct InformationMatrix<T: Scalar> {
    pub beta: Range<usize>,
    pub rho: Option<usize>,
    pub alpha: Range<usize>,
    pub assembled: DMatrix<T>,
    pub covariance: DMatrix<T>,
}

impl<T: Scalar> InformationMatrix<T> {
    fn block(&self, rows: Range<usize>, cols: Range<usize>) -> DMatrix<T> {
        self.assembled
            .view((rows.start, cols.start), (rows.len(), cols.len()))
            .into_owned()
    }

    fn rho_range(&self) -> Range<usize> {
        self.rho.map_or(0..0, |r| r..r + 1)
    }

    pub fn beta_beta(&self) -> DMatrix<T> {
        self.block(self.beta.clone(), self.beta.clone())
    }

    pub fn beta_rho(&self) -> DMatrix<T> {
        self.block(self.beta.clone(), self.rho_range())
    }

    pub fn beta_alpha(&self) -> DMatrix<T> {
        self.block(self.beta.clone(), self.alpha.clone())
    }

    pub fn rho_rho(&self) -> Option<T> {
        self.rho.map(|r| self.assembled[(r, r)])
    }

    pub fn rho_alpha(&self) -> DMatrix<T> {
        self.block(self.rho_range(), self.alpha.clone())
    }

    pub fn alpha_alpha(&self) -> DMatrix<T> {
        self.block(self.alpha.clone(), self.alpha.clone())
    }

    pub fn covariance_beta(&self) -> DMatrix<T> {
        self.covariance
            .view((self.beta.start, self.beta.start), (self.beta.len(), self.beta.len()))
            .into_owned()
    }

    pub fn se_beta(&self) -> DVector<T> {
        self.beta.clone().map(|i| self.covariance[(i, i)].sqrt()).collect::<Vec<_>>().into()
    }

    pub fn se_alpha(&self) -> DVector<T> {
        self.alpha.clone().map(|i| self.covariance[(i, i)].sqrt()).collect::<Vec<_>>().into()
    }

    pub fn se_rho(&self) -> Option<T> {
        self.rho.map(|r| self.covariance[(r, r)].sqrt())
    }
}

/// Dense `(I - ρW)⁻¹`.
pub fn spatial_inverse<T: Scalar>(rho: T, w: &WeightMatrix<T>) -> Result<DMatrix<T>> {
    let n = w.n();
    let a = DMatrix::<T>::identity(n, n) - w.to_dense() * rho;
    a.lu().try_inverse().ok_or_else(|| {
        let s = w.spectrum();
        Error::InadmissibleRho {
            rho: rho.as_f64(),
            lo: s.rho_lo.as_f64(),
            hi: s.rho_hi.as_f64(),
        }
    })
}

/// Expected information of a fit under the log-σ link, with `G = WA⁻¹`
/// and `g = GX̃β`:
///
/// ```text
/// I_ββ = X̃ᵀΣ⁻¹X̃ + S₁         I_βρ = X̃ᵀΣ⁻¹g         I_βα = 0
/// I_ρρ = tr(G²) + tr(ΣGᵀΣ⁻¹G) + gᵀΣ⁻¹g
/// I_ρα = 2 X̃_σᵀ diag(G)       I_αα = 2X̃_σᵀX̃_σ + S₂
/// ```
pub fn fisher_information<T: Scalar>(fit: &FitResult<T>, w: &WeightMatrix<T>) -> Result<InformationMatrix<T>> {
    check_weights(fit, w)?;
    let design = &fit.design;
    let p = design.mean.ncols();
    let q = design.scale.ncols();
    let with_rho = !fit.rho_fixed;
    let dim = p + q + usize::from(with_rho);
    let beta = 0..p;
    let rho_index = with_rho.then_some(p);
    let alpha = p + usize::from(with_rho)..dim;
    let inv_var = inverse_variance(&fit.sigma);
    let two = T::lit(2.0);

    let mut info = DMatrix::zeros(dim, dim);
    let i_bb = weighted_gram(&design.mean.x, &inv_var) + design.mean.penalty_matrix();
    info.view_mut((0, 0), (p, p)).copy_from(&i_bb);
    let xs = &design.scale.x;
    let i_aa = xs.transpose() * xs * two + design.scale.penalty_matrix();
    info.view_mut((alpha.start, alpha.start), (q, q)).copy_from(&i_aa);

    if let Some(r) = rho_index {
        let g_mat = w.mul_mat(&spatial_inverse(fit.rho, w)?);
        let g = &g_mat * (&design.mean.x * &fit.beta);
        let n = w.n();
        let mut tr_gg = T::zero();
        let mut tr_sgsg = T::zero();
        for i in 0..n {
            for j in 0..n {
                let gij = g_mat[(i, j)];
                tr_gg += gij * g_mat[(j, i)];
                // (ΣGᵀΣ⁻¹G)_jj summed: G_ij² σ_j² / σ_i².
                tr_sgsg += gij * gij * inv_var[i] / inv_var[j];
            }
        }
        let g_quad = g
            .iter()
            .zip(inv_var.iter())
            .fold(T::zero(), |acc, (&v, &iv)| acc + v * v * iv);
        info[(r, r)] = tr_gg + tr_sgsg + g_quad;
        let i_br = design.mean.x.transpose() * g.component_mul(&inv_var);
        for k in 0..p {
            info[(k, r)] = i_br[k];
            info[(r, k)] = i_br[k];
        }
        let diag_g = g_mat.diagonal();
        let i_ra = xs.transpose() * diag_g * two;
        for (m, col) in alpha.clone().enumerate() {
            info[(r, col)] = i_ra[m];
            info[(col, r)] = i_ra[m];
        }
    }
    symmetrize(&mut info);
    let factor = SpdFactor::new(&info, "Fisher information").map_err(|_| {
        let eig = SymmetricEigen::new(info.clone()).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v.as_f64()), hi.max(v.as_f64()))
        });
        Error::Singular {
            context: "Fisher information",
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        }
    })?;
    let mut covariance = factor.inverse();
    symmetrize(&mut covariance);
    Ok(InformationMatrix {
        beta,
        rho: rho_index,
        alpha,
        assembled: info,
        covariance,
    })
}

fn check_weights<T: Scalar>(fit: &FitResult<T>, w: &WeightMatrix<T>) -> Result<()> {
    if w.n() != fit.y.len() {
        return Err(Error::DimensionMismatch {
            what: "weight matrix",
            expected: fit.y.len(),
            found: w.n(),
        });
    }
    if weights_fingerprint(w) != fit.weights_fingerprint {
        return Err(Error::InvalidArgument(
            "weight matrix differs from the one the model was fitted with".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WaldZ,
    LrChisq,
    FLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub kind: TestKind,
}

fn chi_square_tail(statistic: f64, df: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    dist.sf(statistic).clamp(0.0, 1.0)
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `z = (θ̂ - θ₀)/se` with a two-sided normal p-value.
pub fn wald_test(estimate: f64, null_value: f64, se: f64) -> Result<TestResult> {
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::InvalidArgument(format!("standard error must be positive, got {se}")));
    }
    let z = (estimate - null_value) / se;
    let p = 2.0 * Normal::standard().sf(z.abs());
    Ok(TestResult {
        statistic: z,
        df: 1.0,
        p_value: p.clamp(0.0, 1.0),
        kind: TestKind::WaldZ,
    })
}

/// Wald test of `ρ = ρ₀` using the fit's information.
pub fn wald_test_rho<T: Scalar>(fit: &FitResult<T>, null_value: f64) -> Result<TestResult> {
    let se = fit
        .fisher
        .as_ref()
        .and_then(InformationMatrix::se_rho)
        .ok_or_else(|| Error::InvalidArgument("fit carries no information for ρ".into()))?;
    wald_test(fit.rho.as_f64(), null_value, se.as_f64())
}

/// Total effective degrees of freedom of a fit, counting ρ when estimated.
pub fn total_dfs<T: Scalar>(fit: &FitResult<T>) -> f64 {
    fit.edf.mean.as_f64() + fit.edf.scale.as_f64() + if fit.rho_fixed { 0.0 } else { 1.0 }
}

/// `Λ = GD₀ - GD₁` with penalized deviances `-2ℓ_p`, referred to χ² with the
/// difference in effective degrees of freedom. Identical models give
/// `Λ = 0, p = 1` with `df = 0`.
///
/// Penalized deviances keep `Λ ≥ 0` for exactly nested fits, i.e. when the
/// null shares the alternative's smoothing parameters (see
/// [`refit_fixed_rho`](crate::estimator::refit_fixed_rho)). Unpenalized
/// deviances of penalized fits can cross when the restriction barely binds.
pub fn lr_test<T: Scalar>(fit_null: &FitResult<T>, fit_alt: &FitResult<T>) -> Result<TestResult> {
    if fit_null.y != fit_alt.y || fit_null.weights_fingerprint != fit_alt.weights_fingerprint {
        return Err(Error::InvalidArgument(
            "likelihood-ratio test needs fits on the same data and weights".into(),
        ));
    }
    let lambda = (T::lit(2.0) * (fit_alt.penalized_loglik - fit_null.penalized_loglik)).as_f64();
    if lambda < -1e-6 {
        return Err(Error::NegativeLikelihoodRatio(lambda));
    }
    let lambda = lambda.max(0.0);
    let df = total_dfs(fit_alt) - total_dfs(fit_null);
    if df <= 1e-9 {
        if lambda <= 1e-9 {
            return Ok(TestResult {
                statistic: 0.0,
                df: 0.0,
                p_value: 1.0,
                kind: TestKind::LrChisq,
            });
        }
        return Err(Error::InvalidArgument(format!(
            "alternative model is not larger than the null (df difference {df:.4})"
        )));
    }
    Ok(TestResult {
        statistic: lambda,
        df,
        p_value: chi_square_tail(lambda, df),
        kind: TestKind::LrChisq,
    })
}

/// `(Cβ̂ - d)ᵀ(C V_β Cᵀ)⁻¹(Cβ̂ - d)` against χ² with `rank(C)` degrees of
/// freedom. `C` may only touch unpenalized mean columns.
pub fn linear_hypothesis<T: Scalar>(fit: &FitResult<T>, c: &DMatrix<T>, d: &DVector<T>) -> Result<TestResult> {
    let info = fit
        .fisher
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit carries no information matrix".into()))?;
    let p = fit.beta.len();
    if c.ncols() != p || c.nrows() != d.len() || c.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            what: "hypothesis matrix",
            expected: p,
            found: c.ncols(),
        });
    }
    let free = fit.design.mean.unpenalized_columns();
    if c.nrows() > free.len() {
        return Err(Error::InvalidArgument(format!(
            "{} restrictions but only {} unpenalized coefficients",
            c.nrows(),
            free.len()
        )));
    }
    for j in 0..p {
        if !free.contains(&j) && c.column(j).iter().any(|v| *v != T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "hypothesis touches penalized coefficient {}",
                fit.design.mean.coefficient_names()[j]
            )));
        }
    }
    let diff = c * &fit.beta - d;
    let middle = c * info.covariance_beta() * c.transpose();
    let factor = SpdFactor::new(&middle, "C V Cᵀ")?;
    if factor.jitter > T::zero() {
        return Err(Error::Singular {
            context: "C V Cᵀ",
            condition: crate::linalg::condition_estimate(&middle),
        });
    }
    let stat = diff.dot(&factor.solve(&diff)).as_f64();
    let df = c.nrows() as f64;
    Ok(TestResult {
        statistic: stat,
        df,
        p_value: chi_square_tail(stat, df),
        kind: TestKind::FLinear,
    })
}

/// Pointwise band of a smooth term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurve {
    pub term: String,
    pub submodel: Submodel,
    pub level: f64,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Submodel {
    Mean,
    Scale,
}

/// `f̂ = X́θ̂` with `v* = diag(X́VX́ᵀ)` and bands `f̂ ± z_{(1+level)/2}√v*`,
/// where `X́` is the basis on the grid padded with zeros outside the term's
/// block. Mean terms are searched before scale terms; see [`smooth_ci_in`]
/// when a variable is smoothed in both submodels.
pub fn smooth_ci<T: Scalar>(fit: &FitResult<T>, term: &str, grid: &[T], level: f64) -> Result<SmoothCurve> {
    let submodel = if fit.design.mean.smooth(term).is_some() {
        Submodel::Mean
    } else if fit.design.scale.smooth(term).is_some() {
        Submodel::Scale
    } else {
        return Err(Error::UnknownTerm(term.to_string()));
    };
    smooth_ci_in(fit, submodel, term, grid, level)
}

/// [`smooth_ci`] for a term of the given submodel.
pub fn smooth_ci_in<T: Scalar>(
    fit: &FitResult<T>,
    submodel: Submodel,
    term: &str,
    grid: &[T],
    level: f64,
) -> Result<SmoothCurve> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let info = fit
        .fisher
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit carries no information matrix".into()))?;
    let (offset, coefs, design) = match submodel {
        Submodel::Mean => (info.beta.start, &fit.beta, &fit.design.mean),
        Submodel::Scale => (info.alpha.start, &fit.alpha, &fit.design.scale),
    };
    if design.smooth(term).is_none() {
        return Err(Error::UnknownTerm(term.to_string()));
    }
    let (info_term, basis) = design.smooth(term).expect("checked above");
    let cols = info_term.columns.clone();
    let rows = basis.design_rows(grid)?;
    let b = coefs.rows(cols.start, cols.len());
    let v = info
        .covariance
        .view((offset + cols.start, offset + cols.start), (cols.len(), cols.len()));
    let fitted = &rows * b;
    let z = normal_quantile(0.5 + level / 2.0);
    let mut curve = SmoothCurve {
        term: info_term.label.clone(),
        submodel,
        level,
        grid: grid.iter().map(|g| g.as_f64()).collect(),
        estimate: Vec::with_capacity(grid.len()),
        se: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
    };
    for i in 0..grid.len() {
        let x = rows.row(i);
        let var = (x * v * x.transpose())[(0, 0)].as_f64().max(0.0);
        let se = var.sqrt();
        let f = fitted[i].as_f64();
        curve.estimate.push(f);
        curve.se.push(se);
        curve.lower.push(f - z * se);
        curve.upper.push(f + z * se);
    }
    Ok(curve)
}

/// Effective degrees of freedom of both submodels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDfs<T> {
    /// `d₁ + Σ df₁ⱼ`.
    pub mean: T,
    /// `d₂ + Σ df₂ₖ`.
    pub scale: T,
    /// `n - df_μ - df_σ`.
    pub error: T,
    pub mean_blocks: Vec<(String, T)>,
    pub scale_blocks: Vec<(String, T)>,
}

/// Unpenalized columns count one each; a smooth block contributes the trace
/// of its diagonal block of `(X̃ᵀWX̃ + S)⁻¹X̃ᵀWX̃`.
fn submodel_dfs<T: Scalar>(design: &SubmodelDesign<T>, weights: &DVector<T>) -> Result<(T, Vec<(String, T)>)> {
    let unpenalized = T::from_usize_lossy(design.unpenalized_columns().len());
    if design.penalties.is_empty() {
        return Ok((unpenalized, Vec::new()));
    }
    let gram = weighted_gram(&design.x, weights);
    let factor = SpdFactor::new(&(&gram + design.penalty_matrix()), "effective degrees of freedom")?;
    let hat = factor.solve_mat(&gram);
    let mut total = unpenalized;
    let mut blocks = Vec::new();
    for t in design.terms.iter().filter(|t| t.kind == TermKind::Smooth) {
        let df = t.columns.clone().fold(T::zero(), |acc, j| acc + hat[(j, j)]);
        total += df;
        blocks.push((t.label.clone(), df));
    }
    Ok((total, blocks))
}

pub fn effective_dfs<T: Scalar>(design: &DesignMatrices<T>, sigma: &DVector<T>) -> Result<EffectiveDfs<T>> {
    let (mean, mean_blocks) = submodel_dfs(&design.mean, &inverse_variance(sigma))?;
    let (scale, scale_blocks) = submodel_dfs(&design.scale, &DVector::from_element(sigma.len(), T::lit(2.0)))?;
    Ok(EffectiveDfs {
        mean,
        scale,
        error: T::from_usize_lossy(design.nobs()) - mean - scale,
        mean_blocks,
        scale_blocks,
    })
}
