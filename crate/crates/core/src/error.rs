use std::path::PathBuf;

/// Errors raised anywhere in the peeling pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric: |c[{i}][{j}] - c[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min:e} vs largest {max:e}")]
    NotPositiveSemidefinite { min: f64, max: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("eigendecomposition failed to converge")]
    EigenNoConvergence,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid radial law parameter: {0}")]
    InvalidRadialParam(String),
    #[error("radial law {0} has no closed-form radial distribution for quadrature")]
    UnsupportedRadial(&'static str),
    #[error("quadrature did not converge: relative error estimate {0:e}")]
    QuadratureNonConvergent(f64),
    #[error("empty column")]
    EmptyColumn,
    #[error("only {retained} rows survive the peel, need at least {required}")]
    EmptyRetention { retained: usize, required: usize },
    #[error("response column is constant; peel target is undefined")]
    DegenerateResponse,
    #[error("retained fraction must be positive, got {0}")]
    NonPositiveFraction(f64),
    #[error("covariance has an all-zero spectrum; log-determinant undefined")]
    AllZeroSpectrum,
    #[error("{failed} of {total} bootstrap replicates failed (limit 1%): {first}")]
    ReplicateFailure { failed: usize, total: usize, first: String },
    #[error("spectrum is flat: every admissible log-gap is zero")]
    DegenerateSpectrum,
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error("search algorithm budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid search algorithm: {0}")]
    InvalidAlgorithm(String),
    #[error("bad IDX magic number 0x{actual:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, actual: u32 },
    #[error("truncated IDX payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} trailing bytes after IDX payload")]
    TrailingGarbage(usize),
    #[error("label {label} at position {index} is outside 0..=9")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("no rows carry label {0}")]
    UnknownLabel(u8),
    #[error("ragged CSV: row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("non-numeric CSV cell at row {row}, column {col}: {cell:?}")]
    NonNumericCell { row: usize, col: usize, cell: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
