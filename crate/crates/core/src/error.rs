use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid grid dimensions {n_x}x{n_y}")]
    InvalidGrid { n_x: usize, n_y: usize },

    #[error("point {index} at ({x}, {y}) lies outside the study region")]
    PointOutsideRegion { index: usize, x: f64, y: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("label {label} is not an occupied cluster once box {index} is removed")]
    UnoccupiedCluster { label: usize, index: usize },

    #[error("chain has no retained samples")]
    EmptyChain,

    #[error("no candidate fits to select from")]
    NoCandidates,

    #[error("BIC is undefined for a pattern with no points")]
    EmptyPattern,

    #[error("unknown simulation setting {0}")]
    UnknownSetting(u32),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
