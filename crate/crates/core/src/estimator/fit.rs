//! The penalized ML fit: alternating location-scale updates on the
//! spatially filtered response and a concentrated search over ρ.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::design::{assemble_design, DataTable, DesignMatrices, ModelSpec};
use super::likelihood::{
    inverse_variance, log_det_a, mean_normal_matrix, penalized_loglik, scale_predictor, ScalePredictor, Theta,
};
use super::scale::{scale_objective, update_scale_model, ScaleOptions};
use super::smoothing::WorkingProblem;
use crate::error::{Error, Result};
use crate::inference::{effective_dfs, fisher_information, EffectiveDfs, InformationMatrix};
use crate::linalg::{weighted_cross, SpdFactor};
use crate::optimize::brent_maximize;
use crate::weights::WeightMatrix;
use crate::Scalar;

/// Tuning of the outer loop. Plain `f64` so the options serialize the same
/// way whatever the working precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceOptions {
    pub rho_tol: f64,
    pub loglik_rel_tol: f64,
    pub max_outer: usize,
    pub scale_score_tol: f64,
    pub scale_max_iter: usize,
    pub clamp_bound: f64,
    pub max_inner: usize,
    /// Select ψ by GCV. When false the penalties keep their current ψ.
    pub select_smoothing: bool,
    /// Outer iterations during which ψ is re-selected; frozen afterwards so
    /// the fixed point is well defined.
    pub psi_updates: usize,
    /// Hold ρ at this value instead of estimating it.
    pub fix_rho: Option<f64>,
    pub compute_information: bool,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            rho_tol: 1e-6,
            loglik_rel_tol: 1e-8,
            max_outer: 50,
            scale_score_tol: 1e-8,
            scale_max_iter: 100,
            clamp_bound: super::likelihood::DEFAULT_CLAMP,
            max_inner: 200,
            select_smoothing: true,
            psi_updates: 10,
            fix_rho: None,
            compute_information: true,
        }
    }
}

impl ConvergenceOptions {
    fn scale_options<T: Scalar>(&self) -> ScaleOptions<T> {
        ScaleOptions {
            score_tol: T::lit(self.scale_score_tol),
            max_iter: self.scale_max_iter,
            clamp: T::lit(self.clamp_bound),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitFlag {
    /// ρ̂ sits on the edge of the admissible interval.
    RhoAtBound { rho: f64, lo: f64, hi: f64 },
    /// The scale predictor hit the clamp on these rows at the final iterate.
    ClampActive { rows: usize },
    OuterNotConverged { iterations: usize },
    /// Fisher information could not be inverted.
    SingularInformation { message: String },
    /// ℓ_p decreased between outer iterations with ψ held fixed.
    NonMonotone { iteration: usize, decrease: f64 },
}

/// One row of the outer-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub iteration: usize,
    pub rho: f64,
    pub penalized_loglik: f64,
    pub psi_mean: Vec<f64>,
    pub psi_scale: Vec<f64>,
    /// ψ changed during this iteration.
    pub psi_selected: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult<T: Scalar> {
    pub rho: T,
    pub beta: DVector<T>,
    pub alpha: DVector<T>,
    pub sigma: DVector<T>,
    pub penalized_loglik: T,
    pub loglik: T,
    /// `GD = -2ℓ(θ̂)` without the penalty.
    pub global_deviance: T,
    pub fisher: Option<InformationMatrix<T>>,
    pub edf: EffectiveDfs<T>,
    pub iterations: usize,
    pub converged: bool,
    /// ρ was held fixed rather than estimated.
    pub rho_fixed: bool,
    pub spec: ModelSpec,
    pub design: DesignMatrices<T>,
    pub y: DVector<T>,
    pub trace: Vec<OuterStep>,
    pub flags: Vec<FitFlag>,
    pub weights_fingerprint: u64,
    pub options: ConvergenceOptions,
}

impl<T: Scalar> FitResult<T> {
    pub fn theta(&self) -> Theta<T> {
        Theta {
            rho: self.rho,
            beta: self.beta.clone(),
            alpha: self.alpha.clone(),
        }
    }

    /// `X̃β̂`, the non-spatial part of the fitted mean.
    pub fn linear_predictor(&self) -> DVector<T> {
        &self.design.mean.x * &self.beta
    }

    /// `y - ρ̂Wy - X̃β̂`.
    pub fn residuals(&self, w: &WeightMatrix<T>) -> DVector<T> {
        &self.y - w.mul_vec(&self.y) * self.rho - self.linear_predictor()
    }

    /// In-sample mean squared residual of the fitted conditional mean.
    pub fn mse(&self, w: &WeightMatrix<T>) -> T {
        let r = self.residuals(w);
        r.norm_squared() / T::from_usize_lossy(r.len())
    }

    /// Coefficient of a named mean column (linear term or intercept).
    pub fn mean_coefficient(&self, label: &str) -> Option<T> {
        let t = self.design.mean.term(label)?;
        (t.columns.len() == 1).then(|| self.beta[t.columns.start])
    }

    pub fn scale_coefficient(&self, label: &str) -> Option<T> {
        let t = self.design.scale.term(label)?;
        (t.columns.len() == 1).then(|| self.alpha[t.columns.start])
    }
}

/// Cheap identity of a weight matrix: FNV-1a over its dimension and entries.
pub fn weights_fingerprint<T: Scalar>(w: &WeightMatrix<T>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&(w.n() as u64).to_le_bytes());
    for i in 0..w.n() {
        for (j, v) in w.row_entries(i) {
            eat(&(j as u64).to_le_bytes());
            eat(&v.as_f64().to_bits().to_le_bytes());
        }
    }
    h
}

/// State of the location-scale fit at a fixed ρ.
struct InnerFit<T: Scalar> {
    beta: DVector<T>,
    alpha: DVector<T>,
    pred: ScalePredictor<T>,
    /// Largest log10 shift of any ψ during this fit.
    psi_shift: f64,
}

/// Maximizes ℓ_p over (β, α) at fixed ρ by alternating the closed-form β̂
/// with Fisher scoring in α. With `select`, ψ of every block is re-chosen by
/// GCV in the first rounds until it stops moving.
fn fit_location_scale<T: Scalar>(
    design: &mut DesignMatrices<T>,
    z: &DVector<T>,
    alpha_init: &DVector<T>,
    select: bool,
    options: &ConvergenceOptions,
) -> Result<InnerFit<T>> {
    const SELECT_ROUNDS: usize = 10;
    let scale_opts = options.scale_options::<T>();
    let clamp = scale_opts.clamp;
    let mut alpha = alpha_init.clone();
    let mut pred = scale_predictor(&design.scale, &alpha, clamp);
    let mut beta = DVector::zeros(design.mean.ncols());
    let mut prev_obj: Option<T> = None;
    let mut selecting = select && design.has_smooths();
    let mut psi_shift = 0.0f64;
    for round in 0..options.max_inner.max(1) {
        let mut psi_moved = false;
        if selecting && !design.mean.penalties.is_empty() {
            let old = design.mean.psi();
            let new = WorkingProblem::mean(&design.mean, &pred.sigma, z).select(&old);
            let shift = log_shift(&old, &new);
            psi_shift = psi_shift.max(shift);
            psi_moved |= shift > PSI_STABLE;
            design.mean.set_psi(&new);
        }
        let new_beta = super::likelihood::beta_gls(&design.mean, &pred.sigma, z)?;
        let resid = z - &design.mean.x * &new_beta;
        if selecting && !design.scale.penalties.is_empty() {
            let old = design.scale.psi();
            let new = WorkingProblem::scale(&design.scale, &pred, &resid).select(&old);
            let shift = log_shift(&old, &new);
            psi_shift = psi_shift.max(shift);
            psi_moved |= shift > PSI_STABLE;
            design.scale.set_psi(&new);
        }
        let sfit = update_scale_model(&resid, &design.scale, &alpha, &scale_opts)?;
        let change = (&new_beta - &beta).amax().max((&sfit.alpha - &alpha).amax());
        beta = new_beta;
        alpha = sfit.alpha;
        pred = sfit.predictor;
        let obj = scale_objective(&design.scale, &resid, &alpha, &pred)
            - T::lit(0.5) * design.mean.penalty_quadratic(&beta);
        if selecting && (!psi_moved && round > 0 || round + 1 >= SELECT_ROUNDS) {
            selecting = false;
        }
        let settled = !selecting
            && (change < T::lit(1e-10)
                || prev_obj.is_some_and(|p| (obj - p).abs() <= T::lit(1e-12) * (T::one() + obj.abs())));
        prev_obj = Some(obj);
        if settled {
            break;
        }
    }
    // β̂ for the final Σ̂.
    beta = super::likelihood::beta_gls(&design.mean, &pred.sigma, z)?;
    Ok(InnerFit {
        beta,
        alpha,
        pred,
        psi_shift,
    })
}

/// ψ counts as settled once no block moves by more than this in log10.
const PSI_STABLE: f64 = 1e-3;

/// Extra outer passes, with ψ frozen, after the stopping rule is met.
const POLISH_PASSES: usize = 10;
const POLISH_RHO_TOL: f64 = 1e-10;

fn log_shift<T: Scalar>(old: &[T], new: &[T]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| (a.as_f64().max(1e-300).log10() - b.as_f64().max(1e-300).log10()).abs())
        .fold(0.0, f64::max)
}

/// `ℓ_p` as a function of ρ with β profiled out and (α, ψ) held fixed:
/// `β̂(ρ) = b_y - ρ b_w`, so the quadratic part is
/// `q₀ - 2ρq₁ + ρ²q₂` (penalty included).
pub(crate) struct RhoProfile<T: Scalar> {
    q0: T,
    q1: T,
    q2: T,
    constant: T,
}

impl<T: Scalar> RhoProfile<T> {
    pub(crate) fn new(
        design: &DesignMatrices<T>,
        alpha: &DVector<T>,
        pred: &ScalePredictor<T>,
        y: &DVector<T>,
        wy: &DVector<T>,
    ) -> Result<Self> {
        let inv_var = inverse_variance(&pred.sigma);
        let s = design.mean.penalty_matrix();
        let factor = SpdFactor::new(&mean_normal_matrix(&design.mean, &inv_var), "penalized normal equations")?;
        let b_y = factor.solve(&weighted_cross(&design.mean.x, &inv_var, y));
        let b_w = factor.solve(&weighted_cross(&design.mean.x, &inv_var, wy));
        let e_y = y - &design.mean.x * &b_y;
        let e_w = wy - &design.mean.x * &b_w;
        let wdot = |a: &DVector<T>, b: &DVector<T>| {
            a.iter()
                .zip(b.iter())
                .zip(inv_var.iter())
                .fold(T::zero(), |acc, ((&u, &v), &w)| acc + u * v * w)
        };
        let pen = |a: &DVector<T>, b: &DVector<T>| a.dot(&(&s * b));
        let half = T::lit(0.5);
        let n = T::from_usize_lossy(y.len());
        let constant = -half * n * T::lit((2.0 * std::f64::consts::PI).ln())
            - pred.eta.iter().fold(T::zero(), |acc, &e| acc + e)
            - half * design.scale.penalty_quadratic(alpha);
        Ok(Self {
            q0: wdot(&e_y, &e_y) + pen(&b_y, &b_y),
            q1: wdot(&e_y, &e_w) + pen(&b_y, &b_w),
            q2: wdot(&e_w, &e_w) + pen(&b_w, &b_w),
            constant,
        })
    }

    fn quadratic(&self, rho: T) -> T {
        self.q0 - T::lit(2.0) * rho * self.q1 + rho * rho * self.q2
    }

    pub(crate) fn value(&self, rho: T, w: &WeightMatrix<T>) -> Result<T> {
        Ok(self.constant + log_det_a(rho, w)? - T::lit(0.5) * self.quadratic(rho))
    }

    /// Maximizer over the admissible interval. Brent first; with eigenvalues
    /// available the profile is strictly concave, so Newton then polishes
    /// the root of its derivative.
    pub(crate) fn maximize(&self, w: &WeightMatrix<T>) -> (T, bool) {
        let spec = w.spectrum();
        let (lo, hi) = (spec.rho_lo, spec.rho_hi);
        let neg_inf = -T::max_value().unwrap();
        let found = brent_maximize(
            |r| self.value(r, w).unwrap_or(neg_inf),
            lo,
            hi,
            T::lit(1e-10),
            200,
        );
        let mut rho = found.x;
        if let Some(ev) = &spec.eigenvalues {
            for _ in 0..30 {
                let (mut g, mut h) = (self.q1 - rho * self.q2, -self.q2);
                for &l in ev {
                    let d = T::one() - rho * l;
                    g -= l / d;
                    h -= (l / d) * (l / d);
                }
                if h >= T::zero() {
                    break;
                }
                let next = rho - g / h;
                if !(next > lo && next < hi) {
                    break;
                }
                let step = (next - rho).abs();
                rho = next;
                if step <= T::lit(1e-15) * (T::one() + rho.abs()) {
                    break;
                }
            }
        }
        let margin = T::lit(1e-5) * (hi - lo);
        let at_bound = rho - lo < margin || hi - rho < margin;
        (rho, at_bound)
    }
}

/// Fits the model by penalized maximum likelihood.
///
/// Starting from ρ = 0 the loop alternates (i) a location-scale fit of
/// `Ay` with ψ re-selection and (ii) maximization of the concentrated
/// likelihood over ρ at the current Σ̂, until ρ moves less than `rho_tol`
/// and ℓ_p changes less than `loglik_rel_tol` in relative terms. A final
/// location-scale fit at ρ̂ delivers β̂ and α̂.
pub fn fit<T: Scalar>(
    spec: &ModelSpec,
    data: &DataTable<T>,
    w: &WeightMatrix<T>,
    options: &ConvergenceOptions,
) -> Result<FitResult<T>> {
    let design = assemble_design(spec, data)?;
    let y = data.column(&spec.response)?.clone();
    if w.n() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "weight matrix",
            expected: y.len(),
            found: w.n(),
        });
    }
    fit_design(spec.clone(), design, y, w, options)
}

/// Refits a model with ρ held at `rho` and the smoothing parameters of
/// `fit` frozen, which gives the exactly nested null model for a test of ρ.
pub fn refit_fixed_rho<T: Scalar>(fit: &FitResult<T>, w: &WeightMatrix<T>, rho: f64) -> Result<FitResult<T>> {
    if weights_fingerprint(w) != fit.weights_fingerprint {
        return Err(Error::InvalidArgument("weight matrix differs from the one used by the fit".into()));
    }
    let options = ConvergenceOptions {
        fix_rho: Some(rho),
        select_smoothing: false,
        ..fit.options.clone()
    };
    fit_design(fit.spec.clone(), fit.design.clone(), fit.y.clone(), w, &options)
}

pub(crate) fn fit_design<T: Scalar>(
    spec: ModelSpec,
    mut design: DesignMatrices<T>,
    y: DVector<T>,
    w: &WeightMatrix<T>,
    options: &ConvergenceOptions,
) -> Result<FitResult<T>> {
    let clamp = T::lit(options.clamp_bound);
    let wy = w.mul_vec(&y);
    let spectrum = w.spectrum();
    if let Some(r) = options.fix_rho {
        let r = T::lit(r);
        if !(r > spectrum.rho_lo && r < spectrum.rho_hi) {
            return Err(Error::InadmissibleRho {
                rho: r.as_f64(),
                lo: spectrum.rho_lo.as_f64(),
                hi: spectrum.rho_hi.as_f64(),
            });
        }
    }
    let select = options.select_smoothing;

    // Step 1: α = (ln SD of OLS residuals, 0, ...), then the ρ = 0 fit.
    let mut rho = options.fix_rho.map_or(T::zero(), T::lit);
    let z0 = &y - &wy * rho;
    let alpha0 = initial_alpha(&design, &z0)?;
    let mut inner = fit_location_scale(&mut design, &z0, &alpha0, select, options)?;

    let mut trace = Vec::new();
    let mut flags = Vec::new();
    let mut converged = options.fix_rho.is_some();
    let mut iterations = 0;
    let mut at_bound = false;
    let mut prev_lp = current_lp(&design, &inner, rho, w, &y, clamp)?;
    trace.push(step_record(0, rho, prev_lp, &design, select));

    if options.fix_rho.is_none() {
        let mut polish = 0;
        for it in 1..=options.max_outer + POLISH_PASSES {
            iterations = it;
            // Steps 2-3 and 6: concentrated search for ρ at the current Σ̂, ψ.
            let profile = RhoProfile::new(&design, &inner.alpha, &inner.pred, &y, &wy)?;
            let (new_rho, bound) = profile.maximize(w);
            at_bound = bound;
            let delta = (new_rho - rho).abs();
            rho = new_rho;
            // Steps 4-5: filter and refit mean and scale.
            let z = &y - &wy * rho;
            let reselect = select && design.has_smooths() && it <= options.psi_updates && !converged;
            inner = fit_location_scale(&mut design, &z, &inner.alpha, reselect, options)?;
            let psi_moving = reselect && inner.psi_shift > PSI_STABLE;
            let lp = current_lp(&design, &inner, rho, w, &y, clamp)?;
            // Any change of ψ changes the objective itself, so ascent is only
            // guaranteed between iterations that keep ψ fixed.
            let psi_changed = reselect && inner.psi_shift > 0.0;
            if !psi_changed && lp < prev_lp - T::lit(1e-8) * (T::one() + prev_lp.abs()) {
                flags.push(FitFlag::NonMonotone {
                    iteration: it,
                    decrease: (prev_lp - lp).as_f64(),
                });
            }
            trace.push(step_record(it, rho, lp, &design, psi_changed));
            let rel = ((lp - prev_lp) / (T::one() + lp.abs())).abs();
            prev_lp = lp;
            if converged {
                // Polishing: the stopping rule bounds the change in ρ, not
                // the score, which is roughly I_ρρ times the remaining step.
                polish += 1;
                if delta < T::lit(POLISH_RHO_TOL) || polish >= POLISH_PASSES || at_bound {
                    break;
                }
            } else if delta < T::lit(options.rho_tol) && rel < T::lit(options.loglik_rel_tol) && !psi_moving {
                converged = true;
                if at_bound {
                    break;
                }
            } else if it >= options.max_outer {
                break;
            }
        }
        if !converged {
            flags.push(FitFlag::OuterNotConverged { iterations });
        }
        if at_bound {
            let s = w.spectrum();
            flags.push(FitFlag::RhoAtBound {
                rho: rho.as_f64(),
                lo: s.rho_lo.as_f64(),
                hi: s.rho_hi.as_f64(),
            });
            converged = false;
        }
    }

    // Step 8: the final location-scale fit at ρ̂ is the last pass of the loop.
    if !inner.pred.clamped.is_empty() {
        flags.push(FitFlag::ClampActive {
            rows: inner.pred.clamped.len(),
        });
    }
    let parts = Finished {
        rho,
        beta: inner.beta,
        alpha: inner.alpha,
        sigma: inner.pred.sigma,
        iterations,
        converged,
        trace,
        flags,
    };
    finish(spec, design, y, w, options, parts)
}

struct Finished<T: Scalar> {
    rho: T,
    beta: DVector<T>,
    alpha: DVector<T>,
    sigma: DVector<T>,
    iterations: usize,
    converged: bool,
    trace: Vec<OuterStep>,
    flags: Vec<FitFlag>,
}

fn finish<T: Scalar>(
    spec: ModelSpec,
    design: DesignMatrices<T>,
    y: DVector<T>,
    w: &WeightMatrix<T>,
    options: &ConvergenceOptions,
    parts: Finished<T>,
) -> Result<FitResult<T>> {
    let clamp = T::lit(options.clamp_bound);
    let theta = Theta {
        rho: parts.rho,
        beta: parts.beta,
        alpha: parts.alpha,
    };
    let lp = penalized_loglik(&theta, &design, w, &y, clamp)?;
    let ll = super::likelihood::loglik(&theta, &design, w, &y, clamp)?;
    let edf = effective_dfs(&design, &parts.sigma)?;
    let mut result = FitResult {
        rho: theta.rho,
        beta: theta.beta,
        alpha: theta.alpha,
        sigma: parts.sigma,
        penalized_loglik: lp,
        loglik: ll,
        global_deviance: -T::lit(2.0) * ll,
        fisher: None,
        edf,
        iterations: parts.iterations,
        converged: parts.converged,
        rho_fixed: options.fix_rho.is_some(),
        spec,
        design,
        y,
        trace: parts.trace,
        flags: parts.flags,
        weights_fingerprint: weights_fingerprint(w),
        options: options.clone(),
    };
    if options.compute_information {
        match fisher_information(&result, w) {
            Ok(info) => result.fisher = Some(info),
            Err(e) => result.flags.push(FitFlag::SingularInformation { message: e.to_string() }),
        }
    }
    Ok(result)
}

/// Classical ML estimator of the SAR model with a linear mean and constant
/// variance: `σ²` and `β` are concentrated out and
/// `ℓ_c(ρ) = ln|A| - (n/2) ln(e(ρ)ᵀe(ρ)/n)` is maximized over the admissible
/// interval.
pub fn fit_ml_sar<T: Scalar>(
    response: &str,
    linear: &[&str],
    data: &DataTable<T>,
    w: &WeightMatrix<T>,
    options: &ConvergenceOptions,
) -> Result<FitResult<T>> {
    let spec = ModelSpec::new(response).mean_linear(linear);
    let design = assemble_design(&spec, data)?;
    let y = data.column(response)?.clone();
    if w.n() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "weight matrix",
            expected: y.len(),
            found: w.n(),
        });
    }
    let n = T::from_usize_lossy(y.len());
    let wy = w.mul_vec(&y);
    let x = &design.mean.x;
    let factor = SpdFactor::new(&(x.transpose() * x), "OLS normal equations")?;
    let b_y = factor.solve(&(x.transpose() * &y));
    let b_w = factor.solve(&(x.transpose() * &wy));
    let e_y = &y - x * &b_y;
    let e_w = &wy - x * &b_w;
    let (q0, q1, q2) = (e_y.dot(&e_y), e_y.dot(&e_w), e_w.dot(&e_w));
    let quad = |r: T| q0 - T::lit(2.0) * r * q1 + r * r * q2;
    let half = T::lit(0.5);
    let concentrated = |r: T| -> Option<T> {
        let q = quad(r);
        if q <= T::zero() {
            return None;
        }
        Some(log_det_a(r, w).ok()? - half * n * (q / n).ln())
    };
    let spectrum = w.spectrum();
    let (lo, hi) = (spectrum.rho_lo, spectrum.rho_hi);
    let mut flags = Vec::new();
    let rho = match options.fix_rho {
        Some(r) => T::lit(r),
        None => {
            let neg_inf = -T::max_value().unwrap();
            let found = brent_maximize(|r| concentrated(r).unwrap_or(neg_inf), lo, hi, T::lit(1e-10), 200);
            let mut rho = found.x;
            if let Some(ev) = &spectrum.eigenvalues {
                for _ in 0..30 {
                    let q = quad(rho);
                    let dq = q1 - rho * q2;
                    let mut g = n * dq / q;
                    let mut h = n * (T::lit(2.0) * dq * dq - q2 * q) / (q * q);
                    for &l in ev {
                        let d = T::one() - rho * l;
                        g -= l / d;
                        h -= (l / d) * (l / d);
                    }
                    if h >= T::zero() {
                        break;
                    }
                    let next = rho - g / h;
                    if !(next > lo && next < hi) {
                        break;
                    }
                    let step = (next - rho).abs();
                    rho = next;
                    if step <= T::lit(1e-15) * (T::one() + rho.abs()) {
                        break;
                    }
                }
            }
            let margin = T::lit(1e-5) * (hi - lo);
            if rho - lo < margin || hi - rho < margin {
                flags.push(FitFlag::RhoAtBound {
                    rho: rho.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
            rho
        }
    };
    let beta = &b_y - &b_w * rho;
    let sigma2 = quad(rho) / n;
    let alpha = DVector::from_element(1, half * sigma2.ln());
    let sigma = DVector::from_element(y.len(), sigma2.sqrt());
    let converged = flags.is_empty();
    let parts = Finished {
        rho,
        beta,
        alpha,
        sigma,
        iterations: 1,
        converged,
        trace: Vec::new(),
        flags,
    };
    finish(spec, design, y, w, options, parts)
}

fn initial_alpha<T: Scalar>(design: &DesignMatrices<T>, z: &DVector<T>) -> Result<DVector<T>> {
    let mut plain = design.mean.clone();
    plain.set_psi(&vec![T::zero(); plain.penalties.len()]);
    let ones = DVector::from_element(z.len(), T::one());
    // Unpenalized OLS can be rank deficient when n is small; a tiny ridge
    // only affects the starting value.
    let beta = super::likelihood::beta_gls(&plain, &ones, z).or_else(|_| {
        plain.set_psi(&vec![T::lit(1e-6); plain.penalties.len()]);
        super::likelihood::beta_gls(&plain, &ones, z)
    })?;
    let r = z - &design.mean.x * &beta;
    let n = T::from_usize_lossy(z.len());
    let mean = r.sum() / n;
    let var = r.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
    let mut alpha = DVector::zeros(design.scale.ncols());
    alpha[0] = T::lit(0.5) * var.max(T::lit(1e-12)).ln();
    Ok(alpha)
}

fn current_lp<T: Scalar>(
    design: &DesignMatrices<T>,
    inner: &InnerFit<T>,
    rho: T,
    w: &WeightMatrix<T>,
    y: &DVector<T>,
    clamp: T,
) -> Result<T> {
    let theta = Theta {
        rho,
        beta: inner.beta.clone(),
        alpha: inner.alpha.clone(),
    };
    penalized_loglik(&theta, design, w, y, clamp)
}

fn step_record<T: Scalar>(iteration: usize, rho: T, lp: T, design: &DesignMatrices<T>, selected: bool) -> OuterStep {
    OuterStep {
        iteration,
        rho: rho.as_f64(),
        penalized_loglik: lp.as_f64(),
        psi_mean: design.mean.psi().iter().map(|v| v.as_f64()).collect(),
        psi_scale: design.scale.psi().iter().map(|v| v.as_f64()).collect(),
        psi_selected: selected,
    }
}
