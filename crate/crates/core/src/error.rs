use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 2 spatial units, got {0}")]
    TooFewUnits(usize),
    #[error("points {first} and {second} coincide; inverse distance is undefined")]
    DuplicatePoint { first: usize, second: usize },
    #[error("unit {0} has no neighbors")]
    IsolatedUnit(usize),
    #[error("self-loop on unit {0}")]
    SelfLoop(usize),
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid weight {value} at ({row}, {col})")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("conflicting weights for edge ({0}, {1})")]
    ConflictingEdge(usize, usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("covariate `{0}` is constant; cannot place knots")]
    ConstantCovariate(String),
    #[error("num_basis ({num_basis}) must exceed degree ({degree})")]
    InvalidBasisSize { num_basis: usize, degree: usize },
    #[error("penalty order {order} must be in 1..{num_basis}")]
    InvalidPenaltyOrder { num_basis: usize, order: usize },
    #[error("value {value} outside knot span [{lo}, {hi}]")]
    OutsideKnotSpan { value: f64, lo: f64, hi: f64 },

    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("sigma[{index}] = {value} is not positive")]
    NonPositiveSigma { index: usize, value: f64 },
    #[error("rho = {rho} outside admissible interval ({lo}, {hi})")]
    InadmissibleRho { rho: f64, lo: f64, hi: f64 },
    #[error("singular system in {context} (condition estimate {condition:e})")]
    Singular { context: &'static str, condition: f64 },
    #[error("scale model did not converge after {iterations} iterations (score norm {score_norm:e})")]
    ScaleNotConverged { iterations: usize, score_norm: f64 },

    #[error("unknown term `{0}`")]
    UnknownTerm(String),
    #[error("unsupported term `{term}`: {reason}")]
    UnsupportedTerm { term: String, reason: String },
    #[error("values have zero variance")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("likelihood-ratio statistic {0} is negative; alternative fits worse than null")]
    NegativeLikelihoodRatio(f64),
    #[error("every replicate failed for estimator {0}")]
    AllReplicatesFailed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
