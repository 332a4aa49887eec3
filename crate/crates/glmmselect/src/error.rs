use thiserror::Error;

/// Failure modes across data ingestion, covariance maintenance, and solving.
///
/// `category` returns the stable machine-readable name used on the CLI's
/// stderr line; keep variant names in sync with it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("predictor column {0} has norm below 1e-12 and cannot be standardized")]
    ZeroVarianceColumn(usize),

    #[error("{0}")]
    InvalidConfig(String),

    #[error("row {row}, column '{column}': {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("required column '{0}' not found in header")]
    MissingColumn(String),

    #[error("no data rows")]
    EmptyDataset,

    #[error("cluster '{0}' has no observations")]
    EmptyCluster(String),

    #[error("covariance factorization failed for cluster {cluster}: matrix is not positive definite")]
    NonPositiveDefinite { cluster: usize },

    #[error("rank-one update for predictor {predictor} is singular on cluster {cluster}")]
    SingularUpdate { cluster: usize, predictor: usize },

    #[error("quadratic form collapsed below 1e-300; residuals are numerically zero")]
    DegenerateFit,

    #[error("line search for predictor {predictor} failed after {doublings} doublings (final step constant {lbar:.3e})")]
    LineSearchExhausted {
        predictor: usize,
        doublings: usize,
        lbar: f64,
    },

    #[error("every predictor is active; the penalty sequence is exhausted")]
    PathComplete,

    #[error("response value {value} at cluster {cluster}, observation {index} is not 0 or 1")]
    NonBinaryResponse {
        cluster: usize,
        index: usize,
        value: f64,
    },

    #[error("true linear predictor has zero norm; relative prediction error is undefined")]
    NullTruth,

    #[error("path has no entries to select from")]
    EmptyPath,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier for scripted consumers of the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ZeroVarianceColumn(_) => "ZeroVarianceColumn",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ParseError { .. } => "ParseError",
            Error::MissingColumn(_) => "MissingColumn",
            Error::EmptyDataset => "EmptyDataset",
            Error::EmptyCluster(_) => "EmptyCluster",
            Error::NonPositiveDefinite { .. } => "NonPositiveDefinite",
            Error::SingularUpdate { .. } => "SingularUpdate",
            Error::DegenerateFit => "DegenerateFit",
            Error::LineSearchExhausted { .. } => "LineSearchExhausted",
            Error::PathComplete => "PathComplete",
            Error::NonBinaryResponse { .. } => "NonBinaryResponse",
            Error::NullTruth => "NullTruth",
            Error::EmptyPath => "EmptyPath",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
        }
    }

    /// Process exit code: 2 for configuration/usage mistakes, 1 for
    /// data or numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
