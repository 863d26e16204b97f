use std::path::PathBuf;

use clap::Args;
use hetsar::effects::{morans_i, MIN_PERMUTATIONS};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{load_weights, read_columns, sig4, write_csv, write_json};

#[derive(Debug, Args)]
pub struct MoranArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Numeric column to test.
    #[arg(long)]
    pub column: String,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV of centered values and their spatial lags (columns `value,lag`).
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Also write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct MoranDocument {
    format_version: String,
    column: String,
    statistic: f64,
    expected: f64,
    p_value: f64,
    alternative: &'static str,
    permutations: usize,
    seed: u64,
    data_sha256: String,
    weights_sha256: String,
}

pub fn run(args: &MoranArgs) -> CliResult<()> {
    if args.permutations < MIN_PERMUTATIONS {
        return Err(CliError::input(format!(
            "--permutations must be at least {MIN_PERMUTATIONS}, got {}",
            args.permutations
        )));
    }
    let (data, data_sha256) = read_columns(&args.data, std::slice::from_ref(&args.column))?;
    let weights = load_weights(&args.weights)?;
    let values = data.column(&args.column)?;
    let result = morans_i(values, &weights.matrix, args.permutations, args.seed).map_err(|e| match e {
        hetsar::Error::ZeroVariance => CliError::input(format!("column `{}` is constant", args.column)),
        other => other.into(),
    })?;
    println!(
        "Moran's I = {}  E[I] = {}  p = {} (one-sided, {} permutations, seed {})",
        sig4(result.statistic),
        sig4(result.expected),
        sig4(result.p_value),
        result.permutations,
        result.seed
    );
    if let Some(path) = &args.scatter {
        write_csv(path, &["value", "lag"], result.scatter.iter().map(|&(v, l)| vec![v, l]))?;
    }
    if let Some(out) = &args.out {
        write_json(
            out,
            &MoranDocument {
                format_version: "1.0".into(),
                column: args.column.clone(),
                statistic: result.statistic,
                expected: result.expected,
                p_value: result.p_value,
                alternative: "greater",
                permutations: result.permutations,
                seed: result.seed,
                data_sha256,
                weights_sha256: weights.digest,
            },
        )?;
    }
    Ok(())
}
