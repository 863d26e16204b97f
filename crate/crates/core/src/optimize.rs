//! Bounded one-dimensional minimization (golden section with parabolic steps).

use crate::Scalar;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMinimum<T> {
    pub x: T,
    pub value: T,
    pub evaluations: usize,
}

/// Brent's method on `[lo, hi]` to absolute tolerance `xtol` in `x`.
///
/// The endpoints are never evaluated, so `f` only needs to be defined on the
/// open interval.
pub fn brent_minimize<T, F>(mut f: F, lo: T, hi: T, xtol: T, max_iter: usize) -> ScalarMinimum<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let golden = T::lit(GOLDEN);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let eps = T::lit(f64::EPSILON.sqrt() * 1e-3);

    let mut x = a + golden * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut evaluations = 1;
    let mut d = T::zero();
    let mut e = T::zero();

    for _ in 0..max_iter {
        let m = half * (a + b);
        let tol1 = eps * x.abs() + xtol / T::lit(3.0);
        let tol2 = two * tol1;
        if (x - m).abs() <= tol2 - half * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (half * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < m { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    ScalarMinimum {
        x,
        value: fx,
        evaluations,
    }
}

/// Maximizes `f` on `[lo, hi]`; `value` holds the maximum.
pub fn brent_maximize<T, F>(mut f: F, lo: T, hi: T, xtol: T, max_iter: usize) -> ScalarMinimum<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let m = brent_minimize(|x| -f(x), lo, hi, xtol, max_iter);
    ScalarMinimum {
        value: -m.value,
        ..m
    }
}
