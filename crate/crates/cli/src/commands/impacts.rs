use std::path::PathBuf;

use clap::Args;
use hetsar::effects::impact_decomposition;
use hetsar::estimator::design::INTERCEPT;
use hetsar::estimator::fit::weights_fingerprint;

use crate::document::{fingerprint_hex, FitDocument};
use crate::error::{CliError, CliResult};
use crate::io::{check_format_version, load_weights, read_json, sig4, write_json};

#[derive(Debug, Args)]
pub struct ImpactsArgs {
    /// Fit document written by `hetsar fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// The weight-spec document used for the fit.
    #[arg(long)]
    pub weights: PathBuf,
    /// Linear mean regressor.
    #[arg(long)]
    pub variable: String,
    /// Also write the impacts as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &ImpactsArgs) -> CliResult<()> {
    let (doc, _): (FitDocument, String) = read_json(&args.fit)?;
    check_format_version(&doc.format_version, 1, "fit document")?;
    let weights = load_weights(&args.weights)?;
    let fp = fingerprint_hex(weights_fingerprint(&weights.matrix));
    if fp != doc.provenance.weights_fingerprint {
        return Err(CliError::input(format!(
            "weights differ from those of the fit (fingerprint {fp}, fit used {})",
            doc.provenance.weights_fingerprint
        )));
    }
    let spec = &doc.fit.spec;
    let var = args.variable.as_str();
    let unsupported = |reason: &str| CliError::Numerical(format!("no impacts for `{var}`: {reason}"));
    if spec.mean.smooth.iter().any(|s| s.var == var) || var.starts_with("s(") {
        return Err(unsupported(
            "smooth terms have no closed-form impact decomposition; only linear mean terms are supported",
        ));
    }
    if var == INTERCEPT {
        return Err(unsupported("the intercept has no marginal effect"));
    }
    if !spec.mean.linear.iter().any(|v| v == var) {
        if spec.scale.linear.iter().any(|v| v == var) || spec.scale.smooth.iter().any(|s| s.var == var) {
            return Err(unsupported("it enters only the scale model, which does not shift the mean"));
        }
        return Err(CliError::input(format!("`{var}` is not a term of the fitted model")));
    }
    let coefficient = doc
        .mean_coefficient(var)
        .ok_or_else(|| CliError::input(format!("fit document has no coefficient `{var}`")))?;
    let impacts = impact_decomposition(var, doc.fit.rho, coefficient, &weights.matrix)?;
    println!("{:<16} {:>12} {:>12} {:>12} {:>12}", "variable", "coefficient", "direct", "indirect", "total");
    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>12}",
        impacts.variable,
        sig4(impacts.coefficient),
        sig4(impacts.direct),
        sig4(impacts.indirect),
        sig4(impacts.total)
    );
    if let Some(out) = &args.out {
        write_json(out, &ImpactsDocument { format_version: "1.0".into(), rho: doc.fit.rho, impacts })?;
    }
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct ImpactsDocument {
    format_version: String,
    rho: f64,
    impacts: hetsar::effects::ImpactSummary,
}
