//! Independent re-computations of the core quantities.

mod common;

use common::{dual_loglik_gap, full_spec, problem, random_theta, CLAMP};
use hetsar::effects::{impact_decomposition, moran_scatter, morans_i};
use hetsar::estimator::likelihood::{log_det_a_eigen, log_det_a_lu};
use hetsar::estimator::{
    assemble_design, beta_gls, fit, log_det_sigma, score_beta, ConvergenceOptions, DataTable,
    ModelSpec,
};
use hetsar::inference::lr_test;
use hetsar::splines::SmoothConfig;
use hetsar::weights::{build_rook_grid, row_standardize, WeightMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random hollow nonnegative matrix, row-standardized. A ring keeps every
/// unit connected.
fn random_row_stochastic(n: usize, seed: u64, symmetric: bool) -> WeightMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, (i + 1) % n)] = 1.0;
        m[((i + 1) % n, i)] = 1.0;
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.2 {
                let v = if symmetric { 1.0 } else { rng.random_range(0.1..2.0) };
                m[(i, j)] = v;
                if symmetric {
                    m[(j, i)] = v;
                }
            }
        }
    }
    row_standardize(&WeightMatrix::from_dense(m).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn log_det_sigma_matches_determinant(sigma in prop::collection::vec(0.05f64..5.0, 1..=8)) {
        let s = DVector::from_vec(sigma.clone());
        let direct = DMatrix::from_diagonal(&s.map(|v| v * v)).determinant().ln();
        prop_assert!((log_det_sigma(&s).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn log_det_a_routes_agree(rho in -0.99f64..0.99) {
        let w = build_rook_grid::<f64>(9, 9).unwrap();
        let ev = w.spectrum().eigenvalues.clone().unwrap();
        let eig = log_det_a_eigen(rho, &ev).unwrap();
        let lu = log_det_a_lu(rho, &w).unwrap();
        prop_assert!((eig - lu).abs() < 1e-9, "{} vs {}", eig, lu);
    }

    #[test]
    fn row_standardized_spectral_radius_is_one(n in 4usize..30, seed in 0u64..1000) {
        let w = random_row_stochastic(n, seed, true);
        for s in w.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-10);
        }
        // Power iteration on (I + W)/2 from a positive start; the
        // Collatz-Wielandt quotients bracket its spectral radius (1 + ρ(W))/2.
        let d = w.to_dense();
        let b = (DMatrix::identity(n, n) + &d) * 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        for _ in 0..20_000 {
            let bx = &b * &x;
            lo = bx.iter().zip(x.iter()).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
            hi = bx.iter().zip(x.iter()).map(|(a, b)| a / b).fold(0.0, f64::max);
            x = &bx / bx.amax();
            if hi - lo < 1e-10 {
                break;
            }
        }
        let radius = 2.0 * 0.5 * (lo + hi) - 1.0;
        prop_assert!((radius - 1.0).abs() < 1e-8, "radius {}", radius);
        // The eigenvalues used for ρ bounds agree.
        let ev = w.spectrum().eigenvalues.clone().unwrap();
        let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((max - 1.0).abs() < 1e-8);
    }

    #[test]
    fn total_impact_identity(n in 5usize..40, seed in 0u64..1000, rho in -0.9f64..0.9, beta in -3.0f64..3.0) {
        let w = random_row_stochastic(n, seed, false);
        let s = impact_decomposition("x", rho, beta, &w).unwrap();
        prop_assert!((s.total * (1.0 - rho) - beta).abs() < 1e-10);
        prop_assert!((s.direct + s.indirect - s.total).abs() < 1e-12);
    }

    #[test]
    fn moran_is_the_scatter_slope(seed in 0u64..1000) {
        let w = random_row_stochastic(25, seed, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DVector::from_fn(25, |_, _| rng.random_range(-2.0..2.0));
        let m = morans_i(&v, &w, 99, seed).unwrap();
        let pts = moran_scatter(&v, &w).unwrap();
        let sxy: f64 = pts.iter().map(|(a, b)| a * b).sum();
        let sxx: f64 = pts.iter().map(|(a, _)| a * a).sum();
        prop_assert!((sxy / sxx - m.statistic).abs() < 1e-10);
    }

    #[test]
    fn moran_statistic_is_relabeling_invariant(seed in 0u64..500) {
        // Permuting units together with W leaves I unchanged.
        let n = 16;
        let w = random_row_stochastic(n, seed, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let d = w.to_dense();
        let pd = DMatrix::from_fn(n, n, |i, j| d[(perm[i], perm[j])]);
        let pw = WeightMatrix::from_dense(pd).unwrap();
        let pv = DVector::from_fn(n, |i, _| v[perm[i]]);
        let a = morans_i(&v, &w, 99, 1).unwrap().statistic;
        let b = morans_i(&pv, &pw, 99, 1).unwrap().statistic;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn penalized_loglik_dual_implementation() {
    let gap = dual_loglik_gap(&problem(5, 6, 21, full_spec()), 20, 4);
    assert!(gap < 1e-10, "gap {gap:e}");
}

#[test]
fn beta_gls_zeroes_the_beta_score() {
    let p = problem(6, 6, 9, full_spec());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let mut theta = random_theta(&p, &mut rng);
        let pred = hetsar::estimator::likelihood::scale_predictor(&p.design.scale, &theta.alpha, CLAMP);
        let ay = &p.y - p.w.mul_vec(&p.y) * theta.rho;
        theta.beta = beta_gls(&p.design.mean, &pred.sigma, &ay).unwrap();
        let score = score_beta(&theta, &p.design, &p.w, &p.y, CLAMP).unwrap();
        assert!(score.norm() < 1e-8, "score norm {:e}", score.norm());
    }
}

#[test]
fn beta_gls_is_ols_for_constant_sigma() {
    let p = problem(6, 6, 10, ModelSpec::new("y").mean_linear(&["x1", "x2", "x3"]));
    let x = &p.design.mean.x;
    let sigma = DVector::from_element(p.y.len(), 1.7);
    let ay = &p.y - p.w.mul_vec(&p.y) * 0.3;
    let gls = beta_gls(&p.design.mean, &sigma, &ay).unwrap();
    let ols = (x.transpose() * x).lu().solve(&(x.transpose() * &ay)).unwrap();
    assert!((gls - ols).amax() < 1e-8);
}

#[test]
fn huge_penalty_leaves_an_affine_smooth() {
    let spec = ModelSpec::new("y").mean_smooth(SmoothConfig {
        num_basis: 12,
        ..SmoothConfig::new("x3")
    });
    let p = problem(8, 8, 5, spec);
    let mut mean = p.design.mean.clone();
    mean.set_psi(&[1e12]);
    let sigma = DVector::from_element(p.y.len(), 1.0);
    let beta = beta_gls(&mean, &sigma, &p.y).unwrap();
    let (term, basis) = mean.smooth("s(x3)").unwrap();
    let grid: Vec<f64> = (0..=40).map(|k| 0.05 + 0.9 * k as f64 / 40.0).collect();
    let rows = basis.design_rows(&grid).unwrap();
    let f = rows * beta.rows(term.columns.start, term.columns.len());
    // Second differences of an affine function on an even grid vanish.
    for k in 1..grid.len() - 1 {
        let d2 = f[k + 1] - 2.0 * f[k] + f[k - 1];
        assert!(d2.abs() < 1e-5, "second difference {d2:e} at {}", grid[k]);
    }
}

#[test]
fn lr_statistic_is_shift_invariant() {
    let p = problem(8, 8, 31, ModelSpec::new("y").mean_linear(&["x1"]).scale_linear(&["x2"]));
    let shifted: Vec<f64> = p.y.iter().map(|v| v + 3.25).collect();
    let mut shifted_data = DataTable::new().with("y", shifted).unwrap();
    for c in ["x1", "x2", "x3"] {
        shifted_data.insert(c, p.data.column(c).unwrap().clone()).unwrap();
    }
    let opts = ConvergenceOptions::default();
    let lambda = |data: &DataTable<f64>| {
        let alt = fit(&p.spec, data, &p.w, &opts).unwrap();
        let null = hetsar::estimator::refit_fixed_rho(&alt, &p.w, 0.0).unwrap();
        lr_test(&null, &alt).unwrap().statistic
    };
    // A constant shift of y is absorbed by the intercept only when ρ = 0; with
    // ρ free it changes the mean of Ay by (1 - ρ)c, still absorbed.
    let (a, b) = (lambda(&p.data), lambda(&shifted_data));
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
}

#[test]
fn identical_models_give_a_null_lr_test() {
    let p = problem(6, 6, 2, ModelSpec::new("y").mean_linear(&["x1"]));
    let f = fit(&p.spec, &p.data, &p.w, &ConvergenceOptions::default()).unwrap();
    let t = lr_test(&f, &f).unwrap();
    assert_eq!((t.statistic, t.df, t.p_value), (0.0, 0.0, 1.0));
}

#[test]
fn design_rejects_unknown_columns() {
    let p = problem(4, 4, 1, ModelSpec::new("y"));
    let spec = ModelSpec::new("y").mean_linear(&["nope"]);
    assert!(assemble_design(&spec, &p.data).is_err());
}
