use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("row {0} has zero Euclidean norm")]
    ZeroNormRow(usize),

    #[error("zero-norm direction vector at index {0}")]
    ZeroNormDirection(usize),

    #[error("non-positive diagonal entry at index {0} in kernel recursion")]
    NonPositiveDiagonal(usize),

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("design index {0} out of range (pool size {1})")]
    IndexOutOfRange(usize, usize),

    #[error("duplicate design index {0}")]
    DuplicateIndex(usize),

    #[error("feature provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

impl Error {
    /// Process exit code for the CLI: 2 for data problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::DimensionMismatch(_)
            | Error::ZeroNormRow(_)
            | Error::ZeroNormDirection(_)
            | Error::IndexOutOfRange(..)
            | Error::DuplicateIndex(_)
            | Error::InvalidParameter(_)
            | Error::SizeGuard(_)
            | Error::ProvenanceMismatch(_) => 2,
            Error::NonPositiveDiagonal(_)
            | Error::NotSymmetric(_)
            | Error::NotPositiveDefinite(_)
            | Error::Numerical(_)
            | Error::Linalg(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
