use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("dataset is empty")]
    Empty,
    #[error("feature dimension must be positive")]
    ZeroDimension,
    #[error("sample {row}: expected {expected} features, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("structured missingness violated: source rows {rows:?} have y=1, a=1")]
    ForbiddenCell { rows: Vec<usize> },
    #[error("labeled pool is missing cell (y={y}, a={a})")]
    MissingCell { y: u8, a: u8 },
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("no training rows")]
    EmptyInput,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("row {row}: non-finite feature or weight")]
    NonFinite { row: usize },
    #[error("row {row}: expected {expected} features, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("sample weights must be nonnegative")]
    NegativeWeight,
    #[error("regularization strength must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },
}

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("required cell {0} is empty")]
    EmptyCell(&'static str),
    #[error("{0} must lie strictly inside (0, 1), got {1}")]
    OutOfRange(&'static str, f64),
    #[error("log argument is nonpositive at beta10 = {0}")]
    NonPositiveLog(f64),
    #[error("moment matrix is singular or ill-conditioned (condition number {0:e}); beta is not identifiable")]
    Identifiability(f64),
    #[error("kappa is clamped on every target a=1 sample; no source a=1 information")]
    DegenerateKappa,
    #[error("proportion invariant violated: {0}")]
    Invariant(String),
    #[error("fitting {model} failed: {source}")]
    Fit {
        model: &'static str,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}
