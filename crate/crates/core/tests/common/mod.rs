#![allow(dead_code)]

use std::path::Path;

use hetsar::estimator::{
    assemble_design, penalized_loglik, score_alpha, score_beta, score_rho, DataTable, DesignMatrices, ModelSpec,
    SubmodelDesign, Theta,
};
use hetsar::sim::{estimator_spec, EstimatorKind, Scenario, Simulator};
use hetsar::splines::SmoothConfig;
use hetsar::weights::{build_rook_grid, WeightMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLAMP: f64 = 15.0;

/// A small heteroscedastic SAR data set on a rook grid with a smooth in both
/// submodels, so every block of the likelihood is exercised.
pub struct Problem {
    pub w: WeightMatrix<f64>,
    pub data: DataTable<f64>,
    pub spec: ModelSpec,
    pub design: DesignMatrices<f64>,
    pub y: DVector<f64>,
}

pub fn full_spec() -> ModelSpec {
    ModelSpec::new("y")
        .mean_linear(&["x1"])
        .mean_smooth(SmoothConfig {
            num_basis: 8,
            ..SmoothConfig::new("x3")
        })
        .scale_linear(&["x2"])
        .scale_smooth(SmoothConfig {
            num_basis: 6,
            ..SmoothConfig::new("x3")
        })
}

pub fn problem(rows: usize, cols: usize, seed: u64, spec: ModelSpec) -> Problem {
    let w = build_rook_grid::<f64>(rows, cols).unwrap();
    let n = w.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let x3: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + x1[i] + (6.0 * x3[i]).sin() + (0.3 * x2[i]).exp() * rng.random_range(-1.0..1.0))
        .collect();
    let data = DataTable::new()
        .with("y", y.clone())
        .unwrap()
        .with("x1", x1)
        .unwrap()
        .with("x2", x2)
        .unwrap()
        .with("x3", x3)
        .unwrap();
    let mut design = assemble_design(&spec, &data).unwrap();
    let psi_mean: Vec<f64> = design.mean.psi().iter().map(|_| 0.7).collect();
    let psi_scale: Vec<f64> = design.scale.psi().iter().map(|_| 2.5).collect();
    design.mean.set_psi(&psi_mean);
    design.scale.set_psi(&psi_scale);
    Problem {
        w,
        data,
        spec,
        design,
        y: DVector::from_vec(y),
    }
}

pub fn random_theta(p: &Problem, rng: &mut ChaCha8Rng) -> Theta<f64> {
    let spectrum = p.w.spectrum();
    let rho = rng.random_range(0.8 * spectrum.rho_lo..0.8 * spectrum.rho_hi);
    let beta = DVector::from_fn(p.design.mean.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let alpha = DVector::from_fn(p.design.scale.ncols(), |_, _| rng.random_range(-0.5..0.5));
    Theta { rho, beta, alpha }
}

/// One replicate of the simulation design.
pub fn sim_replicate(scenario: &Scenario, replicate: usize) -> (DataTable<f64>, WeightMatrix<f64>) {
    let sim = Simulator::new(scenario.clone(), Path::new(".")).unwrap();
    let d = sim.simulate(replicate).unwrap();
    (d.data, sim.weights)
}

pub fn hamsar_spec() -> ModelSpec {
    estimator_spec(EstimatorKind::HAmSar, 20)
}

/// Step `h·max(1, |x|)` rounded so that `x ± h` is exact.
fn step(x: f64, h: f64) -> f64 {
    let s = h * x.abs().max(1.0);
    let t = x + s;
    t - x
}

fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = step(x, 1e-6);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Largest relative gap between the analytic scores and central differences
/// of the penalized log-likelihood over `points` random parameter vectors.
pub fn worst_score_error(p: &Problem, points: usize, seed: u64) -> f64 {
    let lp = |t: &Theta<f64>| penalized_loglik(t, &p.design, &p.w, &p.y, CLAMP).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let theta = random_theta(p, &mut rng);
        let sb = score_beta(&theta, &p.design, &p.w, &p.y, CLAMP).unwrap();
        let sr = score_rho(&theta, &p.design, &p.w, &p.y, CLAMP).unwrap();
        let sa = score_alpha(&theta, &p.design, &p.w, &p.y, CLAMP).unwrap();
        let fd_rho = central(
            |r| {
                lp(&Theta {
                    rho: r,
                    ..theta.clone()
                })
            },
            theta.rho,
        );
        worst = worst.max(rel_err(sr, fd_rho));
        for j in 0..theta.beta.len() {
            let fd = central(
                |b| {
                    let mut t = theta.clone();
                    t.beta[j] = b;
                    lp(&t)
                },
                theta.beta[j],
            );
            worst = worst.max(rel_err(sb[j], fd));
        }
        for m in 0..theta.alpha.len() {
            let fd = central(
                |a| {
                    let mut t = theta.clone();
                    t.alpha[m] = a;
                    lp(&t)
                },
                theta.alpha[m],
            );
            worst = worst.max(rel_err(sa[m], fd));
        }
    }
    worst
}

/// Straight-line penalized log-likelihood: dense `A`, determinant by LU,
/// explicit loops. Shares nothing with the library beyond the design data.
pub fn penalized_loglik_by_hand(
    theta: &Theta<f64>,
    x: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    penalties: &[(std::ops::Range<usize>, DMatrix<f64>, f64)],
    scale_penalties: &[(std::ops::Range<usize>, DMatrix<f64>, f64)],
    w: &DMatrix<f64>,
    y: &DVector<f64>,
) -> f64 {
    let n = y.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= theta.rho * w[(i, j)];
        }
    }
    let log_det_a = a.clone().determinant().abs().ln();
    let mut value = -(n as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln() + log_det_a;
    for i in 0..n {
        let mut ay = y[i];
        for j in 0..n {
            if i != j {
                ay -= theta.rho * w[(i, j)] * y[j];
            }
        }
        let mut mean = 0.0;
        for k in 0..x.ncols() {
            mean += x[(i, k)] * theta.beta[k];
        }
        let mut eta = 0.0;
        for k in 0..xs.ncols() {
            eta += xs[(i, k)] * theta.alpha[k];
        }
        let sigma = eta.exp();
        let v = (ay - mean) / sigma;
        value += -eta - 0.5 * v * v;
    }
    for (cols, g, psi) in penalties {
        let b = theta.beta.rows(cols.start, cols.len());
        value -= 0.5 * psi * (b.transpose() * g * b)[(0, 0)];
    }
    for (cols, g, psi) in scale_penalties {
        let b = theta.alpha.rows(cols.start, cols.len());
        value -= 0.5 * psi * (b.transpose() * g * b)[(0, 0)];
    }
    value
}

/// Largest absolute gap between the library's penalized log-likelihood and
/// the straight-line version at `points` random parameter vectors.
pub fn dual_loglik_gap(p: &Problem, points: usize, seed: u64) -> f64 {
    let blocks = |d: &SubmodelDesign<f64>| {
        d.penalties
            .iter()
            .map(|b| (b.columns.clone(), b.matrix.clone(), b.psi))
            .collect::<Vec<_>>()
    };
    let (pm, ps) = (blocks(&p.design.mean), blocks(&p.design.scale));
    let wd = p.w.to_dense();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let theta = random_theta(p, &mut rng);
        let lib = penalized_loglik(&theta, &p.design, &p.w, &p.y, CLAMP).unwrap();
        let hand = penalized_loglik_by_hand(&theta, &p.design.mean.x, &p.design.scale.x, &pm, &ps, &wd, &p.y);
        worst = worst.max((lib - hand).abs());
    }
    worst
}
