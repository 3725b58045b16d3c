use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hash range must be at least 2, got {0}")]
    InvalidRange(u64),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: u64, dim: u64 },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("report does not match aggregator parameters: {0}")]
    MixedParameters(String),

    #[error("malformed report record: {0}")]
    Codec(String),

    #[error("character {0:?} is not in the alphabet")]
    OutsideAlphabet(char),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
