use thiserror::Error;

/// Errors surfaced by every stage of the placement and assimilation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("puff queried before its first transport step (radius 0)")]
    ZeroRadius,

    #[error("k-th neighbor distance is zero at sample {index}: input saturated with duplicates")]
    DegenerateNeighbors { index: usize },

    #[error("rank-deficient covariance in the {block} block (constant coordinates?)")]
    RankDeficient { block: &'static str },

    #[error("canonical correlation {0} >= 1 implies infinite mutual information")]
    InfiniteInformation(f64),

    #[error("kernel matrix is not positive definite")]
    SingularKernel,

    #[error("objective failed at {point:?}: {source}")]
    Objective { point: Vec<f64>, source: Box<Error> },

    #[error("innovation covariance is singular; ensemble collapsed (raise inflation)")]
    SingularInnovation,

    #[error("no evaluated point keeps {min_sep} m from the selected sensors")]
    Separation { min_sep: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
