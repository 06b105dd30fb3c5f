use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("player {0} is already a member of the coalition")]
    PlayerInSet(usize),

    #[error("index {index} out of range for dimension {d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension {d} exceeds the cap of {cap} for exhaustive computation")]
    DimensionTooLarge { d: usize, cap: usize },

    #[error("linear system is singular or not positive definite")]
    SingularSystem,

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("input has zero probability under the joint distribution")]
    ZeroProbabilityInput,

    #[error("background dataset is empty")]
    EmptyBackground,

    #[error("support of size {size} exceeds the exact-mode cap of {cap}")]
    SupportTooLarge { size: f64, cap: usize },

    #[error("no background rows match the query on the retained features")]
    NoMatchingRows,

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("coordinate descent did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("attributions sum to zero")]
    ZeroSum,

    #[error("no coalition satisfies the constraint")]
    Infeasible,

    #[error("ranking is not a permutation of the features: {0}")]
    InvalidRanking(String),

    #[error("correlation is undefined for a constant vector")]
    ConstantVector,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
