//! Runs a grid study and prints the parameter table.
//!
//! `cargo run --release --example study -- ROWS COLS RHO REPS [ALPHA1_SIGN]`

use std::path::Path;

use hetsar::sim::{run_study, EstimatorKind, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let rows: usize = get(0, "12").parse()?;
    let cols: usize = get(1, "12").parse()?;
    let rho: f64 = get(2, "-0.4").parse()?;
    let reps: usize = get(3, "20").parse()?;
    let mut scenario = Scenario::grid(rows, cols, rho)
        .with_replicates(reps)
        .with_estimators(&[EstimatorKind::HAmSar, EstimatorKind::MlSar, EstimatorKind::GamlssLag]);
    scenario.alpha1_sign = get(4, "1").parse()?;
    let t = std::time::Instant::now();
    let report = run_study(&scenario, Path::new("."))?;
    for est in &report.estimators {
        println!("{} failures={} median_mse={:?}", est.estimator.label(), est.failures, est.median_mse());
        for p in &est.parameters {
            println!(
                "  {:7} true={:8.4} mean={:8.4} sd={:.4}",
                p.parameter,
                p.true_value,
                p.mean,
                p.sd.unwrap_or(f64::NAN)
            );
        }
    }
    eprintln!("elapsed {:?}", t.elapsed());
    Ok(())
}
