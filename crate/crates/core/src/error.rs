use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radar configuration: {0}")]
    Config(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("measurement window [{start}, {end}) exceeds {available} available frames")]
    WindowOutOfBounds { start: usize, end: usize, available: usize },

    #[error("vital-band filter keeps no slow-time bins (L = {len}, f_s = {sample_rate} Hz)")]
    EmptyFilterMask { len: usize, sample_rate: f64 },

    #[error("FISTA diverged at iteration {iteration} (objective {objective}); L_lip = {lipschitz} is too small, safe bound is {safe_bound}")]
    Divergence {
        iteration: usize,
        objective: f64,
        lipschitz: f64,
        safe_bound: f64,
    },

    #[error("sparse recovery returned an all-zero solution; no support to extract")]
    EmptySupport,

    #[error("frequency band [{lo}, {hi}] Hz contains no grid point")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("monitoring session failed: {0}")]
    Session(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
