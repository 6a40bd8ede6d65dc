use thiserror::Error;

/// Errors produced by model construction, inference, estimation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid m-pair: {0}")]
    Contract(String),

    #[error("enumeration infeasible: {configs} configurations exceed the cap of {cap}")]
    EnumerationInfeasible { configs: u128, cap: u64 },

    #[error("invalid selection policy: {0}")]
    Policy(String),

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize, trace: Vec<f64> },

    #[error("matrix `{matrix}` is singular ({} null directions)", null_directions.len())]
    RankDeficient {
        matrix: String,
        null_directions: Vec<Vec<f64>>,
    },

    #[error("matrix `{0}` is not positive semidefinite")]
    NotPsd(String),

    #[error("non-positive diagonal aggregate in `{matrix}` at coordinate {coordinate}")]
    NonPositiveDiagonal { matrix: String, coordinate: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown chunk label `{label}`")]
    UnknownLabel { line: usize, label: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
