use thiserror::Error;

#[derive(Debug, Error)]
pub enum BilliardError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("realization {index} (seed {seed:#018x}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<BilliardError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BilliardError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BilliardError::InvalidArgument(msg.into()))
}
