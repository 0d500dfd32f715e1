use thiserror::Error;

/// Errors raised while loading data or fitting a mixture.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("component {0} is empty under a hard assignment")]
    EmptyCluster(usize),

    #[error("covariance matrix of component {0} is not positive definite")]
    Singular(usize),

    #[error("invalid responsibilities: {0}")]
    InvalidResponsibilities(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data not valid for this model: {0}")]
    InvalidData(String),

    #[error("no candidate start survived")]
    NoSurvivingCandidates,

    #[error("only {survivors} candidate start(s) survived the preliminary runs; need at least 2")]
    TooFewCandidates { survivors: usize },
}

/// Errors raised by the dataset loaders.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NotNumeric { row: usize, column: usize, value: String },

    #[error("row {row}, column {column}: {reason}")]
    Invalid { row: usize, column: usize, reason: String },

    #[error("line {line}: {reason}")]
    EdgeList { line: usize, reason: String },

    #[error("empty input")]
    Empty,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = FitError> = std::result::Result<T, E>;
