use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::Args;
use hetsar::sim::{estimator_spec, run_study_with, study_options, EstimatorKind, Layout, Scenario, Simulator};
use hetsar::weights::{read_points, WeightSpec};

use crate::error::{CliError, CliResult};
use crate::io::{parent_dir, read_json, write_csv, write_json};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario document (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Where to write the simulation report.
    #[arg(long)]
    pub out: PathBuf,
    /// Dump each replicate as CSV, plus the weights and model specs.
    #[arg(long)]
    pub emit_data: Option<PathBuf>,
    /// Worker threads (default: all cores). The report does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Per-replicate MSE table for box plots [default: <out>.mse.csv].
    #[arg(long)]
    pub mse_csv: Option<PathBuf>,
}

fn default_mse_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".mse.csv");
    out.with_file_name(name)
}

/// Weight spec that rebuilds the scenario's matrix from files in `dir`.
fn emitted_weight_spec(scenario: &Scenario, base: &Path, dir: &Path) -> CliResult<WeightSpec> {
    let points = match &scenario.layout {
        Layout::GridRook { rows, cols } => {
            return Ok(WeightSpec::GridRook {
                rows: *rows,
                cols: *cols,
            })
        }
        Layout::Adjacency { path } => {
            let abs = base.join(path).canonicalize()?;
            return Ok(WeightSpec::Adjacency {
                path: Some(abs.to_string_lossy().into_owned()),
                n: None,
                edges: None,
            });
        }
        Layout::PointsInvdist2 { path: Some(path), .. } => read_points(&base.join(path))?,
        Layout::PointsInvdist2 { .. } => scenario.uniform_points().unwrap_or_default(),
    };
    write_csv(&dir.join("points.csv"), &["x", "y"], points.iter().map(|p| vec![p[0], p[1]]))?;
    Ok(WeightSpec::InverseDistanceSquared {
        points: None,
        path: Some("points.csv".into()),
    })
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let (scenario, _): (Scenario, String) = read_json(&args.scenario)?;
    let base = parent_dir(&args.scenario);
    // Any problem with the scenario itself, an inadmissible ρ included, is an input error.
    Simulator::new(scenario.clone(), &base).map_err(|e| CliError::input(format!("invalid scenario: {e}")))?;

    if let Some(dir) = &args.emit_data {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("weights.json"), &emitted_weight_spec(&scenario, &base, dir)?)?;
        write_json(&dir.join("scenario.json"), &scenario)?;
        for &kind in &scenario.estimators {
            // The lag baseline needs a derived `Wy` column, so it has no plain spec.
            if kind != EstimatorKind::GamlssLag {
                write_json(
                    &dir.join(format!("spec_{}.json", kind.label())),
                    &estimator_spec(kind, scenario.num_basis),
                )?;
            }
        }
    }

    let dump_error: Mutex<Option<CliError>> = Mutex::new(None);
    let hook = |r: usize, data: &hetsar::sim::Dataset| {
        let Some(dir) = &args.emit_data else { return };
        let cols: Vec<_> = ["y", "x1", "x2", "x3"]
            .iter()
            .map(|c| data.data.column(c).expect("simulated columns"))
            .collect();
        let rows = (0..data.data.nrows()).map(|i| cols.iter().map(|c| c[i]).collect());
        if let Err(e) = write_csv(&dir.join(format!("replicate_{r:04}.csv")), &["y", "x1", "x2", "x3"], rows) {
            dump_error.lock().expect("dump lock").get_or_insert(e);
        }
    };
    let options = study_options();
    let report = match args.threads {
        Some(0) => return Err(CliError::input("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::input(format!("cannot start {n} threads: {e}")))?
            .install(|| run_study_with(&scenario, &base, &options, hook))?,
        None => run_study_with(&scenario, &base, &options, hook)?,
    };
    if let Some(e) = dump_error.into_inner().expect("dump lock") {
        return Err(e);
    }
    write_json(&args.out, &report)?;

    let header: Vec<&str> = std::iter::once("replicate")
        .chain(report.estimators.iter().map(|e| e.estimator.label()))
        .collect();
    let rows = (0..scenario.replicates).map(|r| {
        std::iter::once(r as f64)
            .chain(report.estimators.iter().map(|e| e.mse[r].unwrap_or(f64::NAN)))
            .collect()
    });
    let mse_path = args.mse_csv.clone().unwrap_or_else(|| default_mse_path(&args.out));
    write_csv(&mse_path, &header, rows)?;

    for e in &report.estimators {
        let rho = e.parameter("rho");
        println!(
            "{:<11} rho mean {:>9.4}  sd {:>7}  failures {}",
            e.estimator.label(),
            rho.map_or(f64::NAN, |p| p.mean),
            rho.and_then(|p| p.sd).map_or_else(|| "-".to_string(), |s| format!("{s:.4}")),
            e.failures
        );
    }
    Ok(())
}
