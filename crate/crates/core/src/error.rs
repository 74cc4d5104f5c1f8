use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("gamma = {gamma} lies outside the admissible interval ({lo}, {hi})")]
    GammaOutOfSupport { gamma: f64, lo: f64, hi: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("block is not a union of connected components of the network")]
    BlockNotClosed,

    #[error("chain {chain} aborted at sweep {sweep}: {msg}")]
    ChainAborted { chain: usize, sweep: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
