//! Small dense linear-algebra helpers shared by the estimator and inference.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::Scalar;

/// Jitter levels tried, relative to the mean absolute diagonal, when a
/// symmetric system fails to factor.
const JITTER_LEVELS: [f64; 5] = [0.0, 1e-10, 1e-9, 1e-8, 1e-6];

/// Cholesky factor of a symmetric positive-definite system, possibly after
/// diagonal jitter.
#[derive(Debug, Clone)]
pub struct SpdFactor<T: Scalar> {
    chol: Cholesky<T, Dyn>,
    pub jitter: T,
}

impl<T: Scalar> SpdFactor<T> {
    pub fn new(m: &DMatrix<T>, context: &'static str) -> Result<Self> {
        let n = m.nrows();
        let scale = if n == 0 {
            T::one()
        } else {
            (m.diagonal().iter().map(|v| v.abs()).fold(T::zero(), |a, b| a + b)
                / T::from_usize_lossy(n))
            .max(T::lit(f64::MIN_POSITIVE))
        };
        for level in JITTER_LEVELS {
            let jitter = T::lit(level) * scale;
            let mut a = m.clone();
            if level > 0.0 {
                for i in 0..n {
                    a[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(a) {
                let diag_ok = chol.l_dirty().diagonal().iter().all(|d| *d > T::zero());
                if diag_ok {
                    return Ok(Self { chol, jitter });
                }
            }
        }
        Err(Error::Singular {
            context,
            condition: condition_estimate(m),
        })
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<T> {
        self.chol.inverse()
    }

    pub fn ln_determinant(&self) -> T {
        self.chol.ln_determinant()
    }
}

/// Ratio of extreme absolute eigenvalues of the symmetric part.
pub fn condition_estimate<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 || m.iter().any(|v| !v.is_finite_value()) {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(sym);
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs().as_f64()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    let min = abs.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram<T: Scalar>(x: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    x.transpose() * xw
}

/// `Xᵀ diag(w) z`.
pub fn weighted_cross<T: Scalar>(x: &DMatrix<T>, w: &DVector<T>, z: &DVector<T>) -> DVector<T> {
    x.transpose() * z.component_mul(w)
}

/// Symmetrizes in place: `(M + Mᵀ)/2`.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = half * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `tr(A⁻¹ B)` for SPD `A` via its factor.
pub fn trace_solve<T: Scalar>(factor: &SpdFactor<T>, b: &DMatrix<T>) -> T {
    factor.solve_mat(b).trace()
}
