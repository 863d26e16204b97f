//! P-spline smooth terms: equidistant B-spline bases, difference penalties
//! and identifiability centering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Configuration of one smooth term as written in a model spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub var: String,
    #[serde(default = "SmoothConfig::default_num_basis")]
    pub num_basis: usize,
    #[serde(default = "SmoothConfig::default_degree")]
    pub degree: usize,
    #[serde(default = "SmoothConfig::default_penalty_order")]
    pub penalty_order: usize,
}

impl SmoothConfig {
    pub fn new(var: impl Into<String>) -> Self {
        Self {
            var: var.into(),
            num_basis: Self::default_num_basis(),
            degree: Self::default_degree(),
            penalty_order: Self::default_penalty_order(),
        }
    }

    fn default_num_basis() -> usize {
        20
    }

    fn default_degree() -> usize {
        3
    }

    fn default_penalty_order() -> usize {
        2
    }
}

/// Equidistant knot sequence covering `[lo, hi]` with `degree` extra knots
/// on each side at the same spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSequence<T> {
    lo: T,
    hi: T,
    degree: usize,
    num_basis: usize,
    knots: Vec<T>,
}

impl<T: Scalar> KnotSequence<T> {
    pub fn equidistant(lo: T, hi: T, num_basis: usize, degree: usize) -> Result<Self> {
        if num_basis <= degree {
            return Err(Error::InvalidBasisSize { num_basis, degree });
        }
        let intervals = num_basis - degree;
        let h = (hi - lo) / T::from_usize_lossy(intervals);
        let knots = (0..=num_basis + degree)
            .map(|i| lo + (T::from_usize_lossy(i) - T::from_usize_lossy(degree)) * h)
            .collect();
        Ok(Self {
            lo,
            hi,
            degree,
            num_basis,
            knots,
        })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn span(&self) -> (T, T) {
        (self.lo, self.hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    /// Nonzero basis values at `x`: returns the first index and the
    /// `degree + 1` values of `B_first..=B_first+degree`.
    fn eval_local(&self, x: T) -> (usize, Vec<T>) {
        let p = self.degree;
        let t = &self.knots;
        let h = t[p + 1] - t[p];
        // Interval index mu with t[mu] <= x < t[mu+1], mu in [p, num_basis-1].
        let raw = ((x - self.lo) / h).floor().as_f64();
        let mut mu = if raw.is_finite() && raw > 0.0 {
            p + raw as usize
        } else {
            p
        };
        mu = mu.min(self.num_basis - 1);
        while mu > p && x < t[mu] {
            mu -= 1;
        }
        while mu < self.num_basis - 1 && x >= t[mu + 1] {
            mu += 1;
        }
        // Triangular Cox-de Boor scheme.
        let mut values = vec![T::zero(); p + 1];
        values[0] = T::one();
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (mu - p, values)
    }

    /// Uncentered basis evaluated at `x`; every value must lie in the span.
    pub fn evaluate(&self, x: &[T]) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(x.len(), self.num_basis);
        for (i, &xi) in x.iter().enumerate() {
            if !xi.is_finite_value() || xi < self.lo || xi > self.hi {
                return Err(Error::OutsideKnotSpan {
                    value: xi.as_f64(),
                    lo: self.lo.as_f64(),
                    hi: self.hi.as_f64(),
                });
            }
            let (first, values) = self.eval_local(xi);
            for (k, v) in values.into_iter().enumerate() {
                out[(i, first + k)] = v;
            }
        }
        Ok(out)
    }
}

fn finite_range<T: Scalar>(x: &[T]) -> Result<(T, T)> {
    let mut lo = T::max_value().unwrap();
    let mut hi = T::min_value().unwrap();
    for (row, &v) in x.iter().enumerate() {
        if !v.is_finite_value() {
            return Err(Error::NonFinite {
                column: String::from("<smooth covariate>"),
                row,
            });
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Uncentered B-spline basis with equidistant knots over `[min x, max x]`.
pub fn bspline_basis<T: Scalar>(x: &[T], num_basis: usize, degree: usize) -> Result<DMatrix<T>> {
    if num_basis <= degree {
        return Err(Error::InvalidBasisSize { num_basis, degree });
    }
    let (lo, hi) = finite_range(x)?;
    if x.is_empty() || hi <= lo {
        return Err(Error::ConstantCovariate(String::from("<smooth covariate>")));
    }
    KnotSequence::equidistant(lo, hi, num_basis, degree)?.evaluate(x)
}

/// `DᵀD` with `D` the `order`-th difference operator on `num_basis` coefficients.
pub fn difference_penalty<T: Scalar>(num_basis: usize, order: usize) -> Result<DMatrix<T>> {
    if order == 0 || order >= num_basis {
        return Err(Error::InvalidPenaltyOrder { num_basis, order });
    }
    let mut d = DMatrix::<T>::identity(num_basis, num_basis);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        d = DMatrix::from_fn(rows, num_basis, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    Ok(d.transpose() * d)
}

/// Subtracts column means; returns the centered matrix and the means.
pub fn center_basis<T: Scalar>(b: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let n = T::from_usize_lossy(b.nrows().max(1));
    let offsets = DVector::from_iterator(b.ncols(), b.column_iter().map(|c| c.sum() / n));
    let mut centered = b.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-offsets[j]);
    }
    (centered, offsets)
}

/// A smooth term ready for a design matrix.
///
/// Centering makes the columns of the full basis sum to zero row-wise, which
/// would alias the intercept. The last centered column is therefore dropped
/// (its coefficient is pinned at 0); the span of fitted functions and the
/// penalty value of every function are unchanged. The stored basis has
/// `num_basis - 1` columns and the penalty is the matching leading block of
/// `DᵀD`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTermBasis<T> {
    pub variable: String,
    pub penalty_order: usize,
    knots: KnotSequence<T>,
    basis: DMatrix<T>,
    offsets: DVector<T>,
    penalty: DMatrix<T>,
}

impl<T: Scalar> SmoothTermBasis<T> {
    pub fn build(x: &[T], config: &SmoothConfig) -> Result<Self> {
        let (lo, hi) = finite_range(x).map_err(|e| match e {
            Error::NonFinite { row, .. } => Error::NonFinite {
                column: config.var.clone(),
                row,
            },
            other => other,
        })?;
        if x.is_empty() || hi <= lo {
            return Err(Error::ConstantCovariate(config.var.clone()));
        }
        let knots = KnotSequence::equidistant(lo, hi, config.num_basis, config.degree)?;
        let full_penalty = difference_penalty::<T>(config.num_basis, config.penalty_order)?;
        let raw = knots.evaluate(x)?;
        let (centered, offsets) = center_basis(&raw);
        let k = config.num_basis - 1;
        Ok(Self {
            variable: config.var.clone(),
            penalty_order: config.penalty_order,
            knots,
            basis: centered.columns(0, k).into_owned(),
            offsets,
            penalty: full_penalty.view((0, 0), (k, k)).into_owned(),
        })
    }

    /// Number of coefficients carried in the design (`num_basis - 1`).
    pub fn num_coefs(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_basis(&self) -> usize {
        self.knots.num_basis()
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn knots(&self) -> &KnotSequence<T> {
        &self.knots
    }

    pub fn span(&self) -> (T, T) {
        self.knots.span()
    }

    /// Centered design columns at the training points.
    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// Training column means of the full basis.
    pub fn offsets(&self) -> &DVector<T> {
        &self.offsets
    }

    pub fn penalty(&self) -> &DMatrix<T> {
        &self.penalty
    }

    /// Design rows at new points, centered with the training offsets.
    pub fn design_rows(&self, grid: &[T]) -> Result<DMatrix<T>> {
        let raw = self.knots.evaluate(grid)?;
        let k = self.num_coefs();
        Ok(DMatrix::from_fn(grid.len(), k, |i, j| raw[(i, j)] - self.offsets[j]))
    }
}

/// Smooth function `sum_j coef_j (B_j(x) - offset_j)` on a grid inside the span.
pub fn evaluate_smooth<T: Scalar>(
    term: &SmoothTermBasis<T>,
    coef: &DVector<T>,
    grid: &[T],
) -> Result<DVector<T>> {
    if coef.len() != term.num_coefs() {
        return Err(Error::DimensionMismatch {
            what: "smooth coefficients",
            expected: term.num_coefs(),
            found: coef.len(),
        });
    }
    Ok(term.design_rows(grid)? * coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    /// Plain recursive Cox-de Boor, independent of the triangular scheme.
    fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64, last_interval: usize) -> f64 {
        if p == 0 {
            // Intervals past the span are closed off so x = hi lands in one bin.
            let inside = i <= last_interval && t[i] <= x && x < t[i + 1];
            let right_end = i == last_interval && x == t[i + 1];
            return if inside || right_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = t[i + p] - t[i];
        if d1 > 0.0 {
            v += (x - t[i]) / d1 * cox_de_boor(t, i, p - 1, x, last_interval);
        }
        let d2 = t[i + p + 1] - t[i + 1];
        if d2 > 0.0 {
            v += (t[i + p + 1] - x) / d2 * cox_de_boor(t, i + 1, p - 1, x, last_interval);
        }
        v
    }

    #[test]
    fn degree_zero_is_one_hot() {
        let x = [0.125, 0.375, 0.625, 0.875, 0.0, 1.0];
        let b = bspline_basis(&x, 4, 0).unwrap();
        let want = [0, 1, 2, 3, 0, 3];
        for (i, &w) in want.iter().enumerate() {
            for j in 0..4 {
                assert_eq!(b[(i, j)], if j == w { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cubic_matches_recursive_oracle_at_interior_knots() {
        let x: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let (num_basis, degree) = (10, 3);
        let b = bspline_basis(&x, num_basis, degree).unwrap();
        let ks = KnotSequence::equidistant(0.0, 1.0, num_basis, degree).unwrap();
        let t = ks.knots();
        for (row, &xi) in x.iter().enumerate() {
            for j in 0..num_basis {
                let want = cox_de_boor(t, j, degree, xi, num_basis - 1);
                assert!((b[(row, j)] - want).abs() < 1e-12, "x={xi} j={j} got {} want {want}", b[(row, j)]);
            }
        }
        // Interior knot itself.
        let xi = t[5];
        let b = ks.evaluate(&[xi]).unwrap();
        for j in 0..num_basis {
            assert_abs_diff_eq!(b[(0, j)], cox_de_boor(t, j, degree, xi, num_basis - 1), epsilon = 1e-12);
        }
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(
            bspline_basis(&[1.0, 1.0, 1.0], 5, 3),
            Err(Error::ConstantCovariate(_))
        ));
        assert!(matches!(
            bspline_basis(&[0.0, 1.0], 3, 3),
            Err(Error::InvalidBasisSize { num_basis: 3, degree: 3 })
        ));
    }

    #[test]
    fn second_difference_penalty_by_hand() {
        let g = difference_penalty::<f64>(4, 2).unwrap();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[1., -2., 1., 0., -2., 5., -4., 1., 1., -4., 5., -2., 0., 1., -2., 1.],
        );
        assert_eq!(g, want);
    }

    #[test]
    fn penalty_null_space() {
        for k in [5, 8, 12] {
            let g = difference_penalty::<f64>(k, 2).unwrap();
            let ones = DVector::from_element(k, 1.0);
            let ramp = DVector::from_fn(k, |i, _| i as f64);
            assert!((&g * ones).norm() < 1e-12);
            assert!((&g * ramp).norm() < 1e-12);
        }
        assert!(matches!(
            difference_penalty::<f64>(3, 3),
            Err(Error::InvalidPenaltyOrder { .. })
        ));
    }

    #[test]
    fn penalty_eigenvalues_10_2() {
        let g = difference_penalty::<f64>(10, 2).unwrap();
        let eig = SymmetricEigen::new(g);
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
        let zeros = eig.eigenvalues.iter().filter(|l| l.abs() < 1e-10).count();
        assert_eq!(zeros, 2);
    }

    #[test]
    fn centering_cases() {
        let b = DMatrix::from_element(5, 2, 3.0);
        let (c, off) = center_basis(&b);
        assert!(c.iter().all(|&v| v == 0.0));
        assert_eq!(off, DVector::from_element(2, 3.0));
        let centered = DMatrix::from_row_slice(3, 2, &[1., -2., 0., 0., -1., 2.]);
        let (c2, off2) = center_basis(&centered);
        assert_eq!(c2, centered);
        assert!(off2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smooth_term_layout() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let term = SmoothTermBasis::build(&x, &SmoothConfig::new("x")).unwrap();
        assert_eq!(term.num_basis(), 20);
        assert_eq!(term.num_coefs(), 19);
        assert_eq!(term.penalty().shape(), (19, 19));
        for col in term.basis().column_iter() {
            assert!(col.mean().abs() < 1e-10);
        }
        // Restricted order-2 penalty keeps only the linear trend ending at 0.
        let eig = SymmetricEigen::new(term.penalty().clone());
        assert_eq!(eig.eigenvalues.iter().filter(|l| l.abs() < 1e-9).count(), 1);
    }

    #[test]
    fn evaluate_smooth_cases() {
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 59.0 * 3.0 - 1.0).collect();
        let cfg = SmoothConfig {
            var: "x".into(),
            num_basis: 12,
            degree: 3,
            penalty_order: 2,
        };
        let term = SmoothTermBasis::build(&x, &cfg).unwrap();
        let zero = DVector::zeros(term.num_coefs());
        assert!(evaluate_smooth(&term, &zero, &[0.0, 1.0]).unwrap().iter().all(|&v| v == 0.0));
        let coef = DVector::from_fn(term.num_coefs(), |i, _| (i as f64).cos());
        let at_train = evaluate_smooth(&term, &coef, &x).unwrap();
        assert!((at_train - term.basis() * &coef).norm() < 1e-12);
        assert!(matches!(
            evaluate_smooth(&term, &coef, &[2.5]),
            Err(Error::OutsideKnotSpan { .. })
        ));
        assert!(matches!(
            evaluate_smooth(&term, &DVector::zeros(3), &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn null_space_coefficients_give_affine_function() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let term = SmoothTermBasis::build(&x, &SmoothConfig::new("x")).unwrap();
        let k = term.num_basis();
        let coef = DVector::from_fn(term.num_coefs(), |i, _| (k - 1 - i) as f64);
        assert!((term.penalty() * &coef).norm() < 1e-10);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let f = evaluate_smooth(&term, &coef, &grid).unwrap();
        let slope = (f[10] - f[0]) / 1.0;
        for (i, &g) in grid.iter().enumerate() {
            assert_abs_diff_eq!(f[i], f[0] + slope * g, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(xs in proptest::collection::vec(-5.0f64..5.0, 3..40),
                              nb in 4usize..25, deg in 0usize..4) {
            prop_assume!(nb > deg);
            let lo = xs.iter().cloned().fold(f64::MAX, f64::min);
            let hi = xs.iter().cloned().fold(f64::MIN, f64::max);
            prop_assume!(hi - lo > 1e-6);
            let b = bspline_basis(&xs, nb, deg).unwrap();
            for row in b.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-10);
                prop_assert!(row.iter().all(|&v| (-1e-14..=1.0 + 1e-14).contains(&v)));
            }
        }

        #[test]
        fn centering_reconstructs(vals in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let b = DMatrix::from_row_slice(4, 3, &vals);
            let (c, off) = center_basis(&b);
            for j in 0..3 {
                prop_assert!(c.column(j).mean().abs() < 1e-12);
                for i in 0..4 {
                    prop_assert!((c[(i, j)] + off[j] - b[(i, j)]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn evaluate_is_linear(a in proptest::collection::vec(-2.0f64..2.0, 9),
                              b in proptest::collection::vec(-2.0f64..2.0, 9), s in -3.0f64..3.0) {
            let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
            let cfg = SmoothConfig { var: "x".into(), num_basis: 10, degree: 3, penalty_order: 2 };
            let term = SmoothTermBasis::build(&x, &cfg).unwrap();
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let grid = [0.0, 3.3, 17.0, 29.0];
            let lhs = evaluate_smooth(&term, &(&a * s + &b), &grid).unwrap();
            let rhs = evaluate_smooth(&term, &a, &grid).unwrap() * s + evaluate_smooth(&term, &b, &grid).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}
