use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("contraction violated for trial seed {seed}: ratio {ratio} > bound {bound}")]
    ContractionViolated { seed: u64, ratio: f64, bound: f64 },

    #[error("stepsize decreased at round {round}: {previous} -> {next}")]
    StepsizeDecreased {
        round: usize,
        previous: f64,
        next: f64,
    },

    #[error("no frozen cumulative-gradient sample was recorded")]
    NoFrozenSample,

    #[error("debug trace required: {0}")]
    MissingDebugLog(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: empty input")]
    EmptyInput { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
