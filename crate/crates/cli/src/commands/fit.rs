use std::path::{Path, PathBuf};

use clap::Args;
use hetsar::estimator::{fit, ConvergenceOptions, ModelSpec};

use crate::document::{DocumentInputs, FitDocument};
use crate::error::{CliError, CliResult};
use crate::io::{load_weights, read_columns, read_json, write_csv, write_json};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Model-spec document (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Weight-spec document (JSON).
    #[arg(long)]
    pub weights: PathBuf,
    /// Where to write the fit document.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub rho_tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
    /// Points on each smooth-curve grid.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    /// Nominal level of the pointwise bands.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Directory for one `<term>.csv` per smooth (grid, estimate, lower, upper).
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    /// CSV of fitted means, residuals and σ̂ per unit.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
}

/// Columns the spec needs, response first, without repeats.
pub fn required_columns(spec: &ModelSpec) -> Vec<String> {
    let mut cols = vec![spec.response.clone()];
    let vars = [&spec.mean, &spec.scale]
        .into_iter()
        .flat_map(|s| s.linear.iter().cloned().chain(s.smooth.iter().map(|c| c.var.clone())));
    for v in vars {
        if !cols.contains(&v) {
            cols.push(v);
        }
    }
    cols
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::input(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let (spec, spec_sha256): (ModelSpec, String) = read_json(&args.spec)?;
    spec.validate()?;
    let (data, data_sha256) = read_columns(&args.data, &required_columns(&spec))?;
    let weights = load_weights(&args.weights)?;
    let options = ConvergenceOptions {
        rho_tol: args.rho_tol,
        max_outer: args.max_outer,
        ..ConvergenceOptions::default()
    };
    let result = fit(&spec, &data, &weights.matrix, &options)?;
    let doc = FitDocument::build(
        &result,
        &weights.matrix,
        DocumentInputs {
            data_path: &args.data.to_string_lossy(),
            data_sha256,
            spec_sha256,
            weights_sha256: weights.digest,
            grid_points: args.grid_points,
            level: args.level,
        },
    )?;
    write_json(&args.out, &doc)?;
    if let Some(dir) = &args.curves_dir {
        write_curves(dir, &doc)?;
    }
    if let Some(path) = &args.residuals {
        let resid = result.residuals(&weights.matrix);
        let fitted = &result.y - &resid;
        write_csv(
            path,
            &["fitted", "residual", "sigma"],
            (0..resid.len()).map(|i| vec![fitted[i], resid[i], result.sigma[i]]),
        )?;
    }
    println!(
        "rho = {:.6}  GD = {:.4}  df_mu = {:.3}  df_sigma = {:.3}  iterations = {}",
        doc.summary.rho, doc.summary.global_deviance, doc.summary.df_mean, doc.summary.df_scale, result.iterations
    );
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "outer loop stopped after {} iterations; flags: {:?}",
            result.iterations, result.flags
        )));
    }
    Ok(())
}

fn write_curves(dir: &Path, doc: &FitDocument) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    for curve in &doc.smooth_curves {
        let submodel = match curve.submodel {
            hetsar::inference::Submodel::Mean => "mean",
            hetsar::inference::Submodel::Scale => "scale",
        };
        let path = dir.join(format!("{submodel}_{}.csv", file_stem(&curve.term)));
        write_csv(
            &path,
            &["grid", "estimate", "se", "lower", "upper"],
            (0..curve.grid.len()).map(|i| vec![curve.grid[i], curve.estimate[i], curve.se[i], curve.lower[i], curve.upper[i]]),
        )?;
    }
    Ok(())
}
