//! Smoothing-parameter selection by generalized cross-validation on the
//! working penalized weighted least-squares problem of each submodel.

use nalgebra::{DMatrix, DVector};

use super::design::SubmodelDesign;
use super::likelihood::ScalePredictor;
use crate::linalg::{weighted_cross, weighted_gram, SpdFactor};
use crate::optimize::brent_minimize;
use crate::Scalar;

/// `log10 ψ` grid: 21 points from 1e-4 to 1e6.
pub const LOG10_PSI_GRID: (f64, f64, usize) = (-4.0, 6.0, 21);

/// Working problem `min_β Σ w_i (z_i - x_iᵀβ)² + βᵀ(Σψ_j G_j)β`.
pub struct WorkingProblem<'a, T: Scalar> {
    design: &'a SubmodelDesign<T>,
    weights: DVector<T>,
    z: DVector<T>,
    gram: DMatrix<T>,
    cross: DVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcvValue<T> {
    pub score: T,
    pub edf: T,
    pub rss: T,
}

impl<'a, T: Scalar> WorkingProblem<'a, T> {
    pub fn new(design: &'a SubmodelDesign<T>, weights: DVector<T>, z: DVector<T>) -> Self {
        let gram = weighted_gram(&design.x, &weights);
        let cross = weighted_cross(&design.x, &weights, &z);
        Self {
            design,
            weights,
            z,
            gram,
            cross,
        }
    }

    /// Mean submodel at fixed `Σ`: weights `1/σ²`, response `Ay`.
    pub fn mean(design: &'a SubmodelDesign<T>, sigma: &DVector<T>, ay: &DVector<T>) -> Self {
        Self::new(design, sigma.map(|s| T::one() / (s * s)), ay.clone())
    }

    /// Scale submodel linearized at the current `α`: Fisher weights 2 and
    /// working response `η + (r²/σ² - 1)/2`.
    pub fn scale(design: &'a SubmodelDesign<T>, pred: &ScalePredictor<T>, residuals: &DVector<T>) -> Self {
        let half = T::lit(0.5);
        let z = DVector::from_iterator(
            residuals.len(),
            residuals
                .iter()
                .zip(pred.eta.iter())
                .zip(pred.sigma.iter())
                .map(|((&r, &eta), &s)| eta + half * ((r / s) * (r / s) - T::one())),
        );
        Self::new(design, DVector::from_element(residuals.len(), T::lit(2.0)), z)
    }

    fn penalty(&self, psi: &[T]) -> DMatrix<T> {
        let p = self.design.ncols();
        let mut s = DMatrix::zeros(p, p);
        for (block, &v) in self.design.penalties.iter().zip(psi) {
            let start = block.columns.start;
            let k = block.columns.len();
            let mut view = s.view_mut((start, start), (k, k));
            view += &block.matrix * v;
        }
        s
    }

    /// `GCV(ψ) = n·RSS_w / (n - tr H)²`.
    pub fn gcv(&self, psi: &[T]) -> Option<GcvValue<T>> {
        let m = &self.gram + self.penalty(psi);
        let factor = SpdFactor::new(&m, "gcv").ok()?;
        let beta = factor.solve(&self.cross);
        let edf = factor.solve_mat(&self.gram).trace();
        let fitted = &self.design.x * &beta;
        let rss = self
            .z
            .iter()
            .zip(fitted.iter())
            .zip(self.weights.iter())
            .fold(T::zero(), |acc, ((&z, &f), &w)| acc + w * (z - f) * (z - f));
        let n = T::from_usize_lossy(self.z.len());
        let dof = n - edf;
        if dof <= T::zero() {
            return None;
        }
        Some(GcvValue {
            score: n * rss / (dof * dof),
            edf,
            rss,
        })
    }

    /// Coordinate-wise search: for each block, scan the log grid and refine
    /// around the best grid point by golden-section/parabolic search in
    /// `log10 ψ`. Falls back to the grid optimum if refinement is worse.
    pub fn select(&self, start: &[T]) -> Vec<T> {
        let mut psi = start.to_vec();
        let nblocks = psi.len();
        if nblocks == 0 {
            return psi;
        }
        let sweeps = if nblocks == 1 { 1 } else { 3 };
        let (lo, hi, count) = LOG10_PSI_GRID;
        let step = (hi - lo) / (count - 1) as f64;
        let ten = T::lit(10.0);
        let big = T::max_value().unwrap();
        for _ in 0..sweeps {
            for j in 0..nblocks {
                let mut eval = |log_psi: T| {
                    let mut trial = psi.clone();
                    trial[j] = ten.powf(log_psi);
                    self.gcv(&trial).map_or(big, |g| g.score)
                };
                let mut best = (0usize, big);
                for g in 0..count {
                    let v = eval(T::lit(lo + step * g as f64));
                    if v < best.1 {
                        best = (g, v);
                    }
                }
                let center = lo + step * best.0 as f64;
                let a = T::lit((center - step).max(lo));
                let b = T::lit((center + step).min(hi));
                let refined = brent_minimize(&mut eval, a, b, T::lit(1e-4), 100);
                let log_psi = if refined.value < best.1 {
                    refined.x
                } else {
                    T::lit(center)
                };
                psi[j] = ten.powf(log_psi);
            }
        }
        psi
    }
}
