use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("inference diverged at iteration {iteration} (non-finite energy)")]
    InferenceDivergence { iteration: usize },

    #[error("non-finite weight update: {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("outside the domain of the closed form: {0}")]
    Domain(String),

    #[error("zero-norm vector has no direction")]
    ZeroNorm,

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Idx(#[from] crate::data::IdxError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
