use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("basis is not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("columns are not unit-normalized (max deviation {deviation:e})")]
    NotNormalized { deviation: f64 },

    #[error("signal is identically zero")]
    ZeroSignal,

    #[error("enumeration of {requested} supports exceeds the limit of {limit}")]
    EnumerationTooLarge { requested: u128, limit: u128 },

    #[error("invalid sparsity: {0}")]
    InvalidSparsity(String),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("restricted distinguishability {gamma:e} is at or below the zero tolerance")]
    DegenerateGamma { gamma: f64 },

    #[error("no support of size <= {max_sparsity} fits the data within epsilon = {epsilon:e}")]
    NoFeasibleSolution { max_sparsity: usize, epsilon: f64 },

    #[error("greedy pursuit stalled: max correlation {correlation:e} with residual {residual:e}")]
    Stalled { correlation: f64, residual: f64 },

    #[error("insufficient evidence: {have} trials, {need} required")]
    InsufficientEvidence { have: usize, need: usize },

    #[error("verification suite failed with {} violation(s)", .0.len())]
    SuiteFailure(Vec<String>),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o failure on {path}: {source}")]
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
