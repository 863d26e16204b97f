//! Data-generating processes for the simulation studies.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::DataTable;
use crate::weights::{build_inverse_distance_squared, WeightMatrix, WeightSpec};

/// `f(x) = 0.2x¹¹(10(1-x))⁶ + 10(10x)³(1-x)¹⁰` on `[0, 1]`.
pub fn true_smooth(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("true_smooth is defined on [0, 1], got {x}")));
    }
    let u = 1.0 - x;
    Ok(0.2 * x.powi(11) * (10.0 * u).powi(6) + 10.0 * (10.0 * x).powi(3) * u.powi(10))
}

/// `E f(X)` for `X ~ U(0, 1)`, by composite Simpson on 2000 panels.
pub fn true_smooth_mean() -> f64 {
    let m = 2000;
    let h = 1.0 / m as f64;
    let f = |x: f64| true_smooth(x).expect("inside [0, 1]");
    let mut s = f(0.0) + f(1.0);
    for i in 1..m {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Spatial layout of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    GridRook {
        rows: usize,
        cols: usize,
    },
    /// Inverse squared distances between `n` uniform points on the unit
    /// square, or between the coordinates in `path`.
    PointsInvdist2 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
    Adjacency {
        path: String,
    },
}

/// Covariate distributions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSet {
    /// `x₁ ~ N(0,1)`, `x₂ ~ N(2,1)`, `x₃ ~ U(0,1)`.
    #[default]
    Regular,
    /// `x₁ ~ U(1,10)`, `x₂ ~ U(0,1)`, `x₃ ~ U(0,1)`.
    Irregular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimatorKind {
    HAmSar,
    MlSar,
    AmSar,
    GamlssLag,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::HAmSar => "H_AM_SAR",
            EstimatorKind::MlSar => "ML_SAR",
            EstimatorKind::AmSar => "AM_SAR",
            EstimatorKind::GamlssLag => "GAMLSS_LAG",
        }
    }
}

fn default_beta0() -> f64 {
    2.0
}
fn default_beta1() -> f64 {
    -0.5
}
fn default_beta2() -> f64 {
    1.75
}
fn default_alpha0() -> f64 {
    0.5
}
fn default_alpha1() -> f64 {
    0.3
}
fn default_alpha1_sign() -> f64 {
    1.0
}
fn default_replicates() -> usize {
    100
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::HAmSar]
}
fn default_num_basis() -> usize {
    20
}

/// One simulation design.
///
/// The mean is `β₀ + β₁x₁ + β₂x₂ + f(x₃)` with `β₁` the net coefficient on
/// `x₁`. The noise scale is `σ = exp(α₀ + s·α₁x₂)` where `s = alpha1_sign`
/// (default `+1`; `-1` gives the `exp(α₀ − α₁x₂)` reading of the same
/// design). Estimates of the `x₂` slope are divided by `s` before they are
/// compared with `α₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub layout: Layout,
    #[serde(default)]
    pub covariates: CovariateSet,
    pub rho: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    #[serde(default = "default_alpha1_sign")]
    pub alpha1_sign: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Basis size of the smooth in `x₃` for the semiparametric estimators.
    #[serde(default = "default_num_basis")]
    pub num_basis: usize,
}

impl Scenario {
    /// Regular-grid design with the default coefficients.
    pub fn grid(rows: usize, cols: usize, rho: f64) -> Self {
        Self {
            layout: Layout::GridRook { rows, cols },
            covariates: CovariateSet::Regular,
            rho,
            beta0: default_beta0(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            alpha0: default_alpha0(),
            alpha1: default_alpha1(),
            alpha1_sign: default_alpha1_sign(),
            replicates: default_replicates(),
            seed: 0,
            estimators: default_estimators(),
            num_basis: default_num_basis(),
        }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_estimators(mut self, estimators: &[EstimatorKind]) -> Self {
        self.estimators = estimators.to_vec();
        self
    }

    /// Net slope of `log σ` on `x₂`.
    pub fn scale_slope(&self) -> f64 {
        self.alpha1_sign * self.alpha1
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators requested".into()));
        }
        if self.alpha1_sign != 1.0 && self.alpha1_sign != -1.0 {
            return Err(Error::InvalidArgument("alpha1_sign must be 1 or -1".into()));
        }
        let finite = [
            self.rho,
            self.beta0,
            self.beta1,
            self.beta2,
            self.alpha0,
            self.alpha1,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scenario coefficients must be finite".into()));
        }
        Ok(())
    }

    /// The generated point pattern of a `points_invdist2` layout with `n`
    /// points; `None` for other layouts.
    pub fn uniform_points(&self) -> Option<Vec<[f64; 2]>> {
        match &self.layout {
            Layout::PointsInvdist2 { n: Some(n), path: None } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(POINTS_STREAM);
                Some((0..*n).map(|_| [rng.random(), rng.random()]).collect())
            }
            _ => None,
        }
    }

    /// Weight matrix of the layout. Uniform points come from their own
    /// stream of the scenario seed, so every replicate shares them.
    pub fn weights(&self, base_dir: &Path) -> Result<WeightMatrix<f64>> {
        match &self.layout {
            Layout::GridRook { rows, cols } => WeightSpec::GridRook {
                rows: *rows,
                cols: *cols,
            }
            .build(base_dir),
            Layout::PointsInvdist2 { n, path } => match (n, path) {
                (Some(_), None) => {
                    let pts: Vec<(f64, f64)> = self
                        .uniform_points()
                        .unwrap_or_default()
                        .into_iter()
                        .map(|p| (p[0], p[1]))
                        .collect();
                    build_inverse_distance_squared(&pts)
                }
                (None, Some(path)) => WeightSpec::InverseDistanceSquared {
                    points: None,
                    path: Some(path.clone()),
                }
                .build(base_dir),
                _ => Err(Error::InvalidArgument(
                    "points_invdist2 needs exactly one of `n` or `path`".into(),
                )),
            },
            Layout::Adjacency { path } => WeightSpec::Adjacency {
                path: Some(path.clone()),
                n: None,
                edges: None,
            }
            .build(base_dir),
        }
    }
}

/// Stream reserved for the point pattern; replicates use their index.
pub const POINTS_STREAM: u64 = u64::MAX;

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Columns `y`, `x1`, `x2`, `x3`.
    pub data: DataTable<f64>,
    /// Non-spatial mean `β₀ + β₁x₁ + β₂x₂ + f(x₃)`.
    pub mu0: DVector<f64>,
    pub sigma: DVector<f64>,
    pub noise: DVector<f64>,
}

/// Scenario plus its weight matrix and the factorized `A = I - ρW`, shared
/// by all replicates.
pub struct Simulator {
    pub scenario: Scenario,
    pub weights: WeightMatrix<f64>,
    filter: Option<LU<f64, Dyn, Dyn>>,
}

impl Simulator {
    pub fn new(scenario: Scenario, base_dir: &Path) -> Result<Self> {
        scenario.validate()?;
        let weights = scenario.weights(base_dir)?;
        let spectrum = weights.spectrum();
        if !(scenario.rho > spectrum.rho_lo && scenario.rho < spectrum.rho_hi) {
            return Err(Error::InadmissibleRho {
                rho: scenario.rho,
                lo: spectrum.rho_lo,
                hi: spectrum.rho_hi,
            });
        }
        let filter = (scenario.rho != 0.0).then(|| {
            let n = weights.n();
            (DMatrix::identity(n, n) - weights.to_dense() * scenario.rho).lu()
        });
        Ok(Self {
            scenario,
            weights,
            filter,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    /// Draws replicate `replicate`: covariates, noise `ω ~ N(0, σ²)` and the
    /// reduced form `y = A⁻¹(μ₀ + ω)`.
    pub fn simulate(&self, replicate: usize) -> Result<Dataset> {
        let s = &self.scenario;
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(replicate as u64);
        let (x1, x2, x3) = draw_covariates(&mut rng, n, s.covariates);
        let mu0 = DVector::from_fn(n, |i, _| {
            s.beta0 + s.beta1 * x1[i] + s.beta2 * x2[i] + true_smooth(x3[i]).expect("x3 in [0, 1]")
        });
        let slope = s.scale_slope();
        let sigma = DVector::from_fn(n, |i, _| (s.alpha0 + slope * x2[i]).exp());
        let noise = DVector::from_fn(n, |i, _| sigma[i] * rng.sample::<f64, _>(StandardNormal));
        let rhs = &mu0 + &noise;
        let y = match &self.filter {
            None => rhs,
            Some(lu) => lu.solve(&rhs).ok_or(Error::InadmissibleRho {
                rho: s.rho,
                lo: self.weights.spectrum().rho_lo,
                hi: self.weights.spectrum().rho_hi,
            })?,
        };
        let data = DataTable::new()
            .with("y", y.as_slice().to_vec())?
            .with("x1", x1)?
            .with("x2", x2)?
            .with("x3", x3)?;
        Ok(Dataset {
            data,
            mu0,
            sigma,
            noise,
        })
    }
}

fn draw_covariates(rng: &mut ChaCha8Rng, n: usize, set: CovariateSet) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    match set {
        CovariateSet::Regular => {
            let x2_dist = Normal::new(2.0, 1.0).expect("valid normal");
            let x1 = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x2 = (0..n).map(|_| x2_dist.sample(rng)).collect();
            let x3 = (0..n).map(|_| rng.random::<f64>()).collect();
            (x1, x2, x3)
        }
        CovariateSet::Irregular => {
            let x1 = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
            let x2 = (0..n).map(|_| rng.random::<f64>()).collect();
            let x3 = (0..n).map(|_| rng.random::<f64>()).collect();
            (x1, x2, x3)
        }
    }
}

/// Convenience wrapper: build the simulator and draw one replicate.
pub fn simulate_dataset(scenario: &Scenario, replicate: usize, base_dir: &Path) -> Result<(Dataset, WeightMatrix<f64>)> {
    let sim = Simulator::new(scenario.clone(), base_dir)?;
    let data = sim.simulate(replicate)?;
    Ok((data, sim.weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_endpoints_and_midpoint() {
        assert_eq!(true_smooth(0.0).unwrap(), 0.0);
        assert_eq!(true_smooth(1.0).unwrap(), 0.0);
        let want = 0.2 * 0.5f64.powi(11) * 5f64.powi(6) + 10.0 * 125.0 * 0.5f64.powi(10);
        assert!((true_smooth(0.5).unwrap() - want).abs() < 1e-12);
        assert!((true_smooth(0.5).unwrap() - 2.74658).abs() < 1e-5);
        assert!(true_smooth(1.2).is_err());
        assert!(true_smooth(-0.1).is_err());
    }

    #[test]
    fn smooth_mean_matches_beta_integrals() {
        // ∫x¹¹(1-x)⁶ = B(12,7), ∫x³(1-x)¹⁰ = B(4,11).
        fn beta(a: u32, b: u32) -> f64 {
            let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
            fact(a - 1) * fact(b - 1) / fact(a + b - 1)
        }
        let exact = 0.2 * 1e6 * beta(12, 7) + 1e4 * beta(4, 11);
        assert!((true_smooth_mean() - exact).abs() < 1e-9);
        // 2 + E f = 5.3953, which the literature rounds to 5.397.
        assert!((2.0 + exact - 5.397).abs() < 2e-3);
    }

    #[test]
    fn replicates_are_deterministic() {
        let sim = Simulator::new(Scenario::grid(5, 5, 0.4).with_seed(3), Path::new(".")).unwrap();
        let a = sim.simulate(7).unwrap();
        let b = sim.simulate(7).unwrap();
        assert_eq!(a.data, b.data);
        let c = sim.simulate(8).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn reduced_form_inverts_filter() {
        let sim = Simulator::new(Scenario::grid(6, 6, -0.6).with_seed(1), Path::new(".")).unwrap();
        let d = sim.simulate(0).unwrap();
        let y = d.data.column("y").unwrap();
        let ay = y - sim.weights.mul_vec(y) * -0.6;
        assert!((ay - (&d.mu0 + &d.noise)).amax() < 1e-10);
    }

    #[test]
    fn zero_rho_skips_the_solve() {
        let sim = Simulator::new(Scenario::grid(6, 6, 0.0).with_seed(1), Path::new(".")).unwrap();
        let d = sim.simulate(2).unwrap();
        let y = d.data.column("y").unwrap();
        assert!((y - (&d.mu0 + &d.noise)).amax() < 1e-12);
    }

    #[test]
    fn unit_noise_when_scale_is_flat() {
        let mut s = Scenario::grid(20, 20, 0.3).with_seed(11);
        s.alpha0 = 0.0;
        s.alpha1 = 0.0;
        let sim = Simulator::new(s, Path::new(".")).unwrap();
        let d = sim.simulate(0).unwrap();
        let m = d.noise.mean();
        let sd = (d.noise.map(|v| (v - m) * (v - m)).sum() / 399.0).sqrt();
        assert!((sd - 1.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn rho_outside_bounds_rejected() {
        assert!(matches!(
            Simulator::new(Scenario::grid(4, 4, 1.2), Path::new(".")),
            Err(Error::InadmissibleRho { .. })
        ));
    }

    #[test]
    fn scenario_document_defaults() {
        let s: Scenario =
            serde_json::from_str(r#"{"layout":{"kind":"grid_rook","rows":12,"cols":12},"rho":-0.4,"seed":5}"#).unwrap();
        assert_eq!(s.replicates, 100);
        assert_eq!(s.beta1, -0.5);
        assert_eq!(s.scale_slope(), 0.3);
        assert_eq!(s.estimators, vec![EstimatorKind::HAmSar]);
        let p: Scenario = serde_json::from_str(
            r#"{"layout":{"kind":"points_invdist2","n":50},"rho":0.8,"estimators":["ML_SAR","GAMLSS_LAG"]}"#,
        )
        .unwrap();
        let w = p.weights(Path::new(".")).unwrap();
        assert_eq!(w.n(), 50);
        assert!(w.is_dense());
    }
}
