use std::fmt;
use std::process::ExitCode;

use hetsar::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input: exit 1.
    Input(String),
    /// Singular systems, inadmissible ρ and similar: exit 2.
    Numerical(String),
    /// The fit finished without converging; its document was written: exit 3.
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::NotConverged(_) => 3,
        })
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NonPositiveSigma { .. }
            | Error::InadmissibleRho { .. }
            | Error::Singular { .. }
            | Error::ScaleNotConverged { .. }
            | Error::UnsupportedTerm { .. }
            | Error::NegativeLikelihoodRatio(_)
            | Error::AllReplicatesFailed(_) => CliError::Numerical(msg),
            _ => CliError::Input(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
