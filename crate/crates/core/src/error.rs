use thiserror::Error;

/// Errors produced by the planning library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("search space of {size} joint actions exceeds the enumeration cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("action {0} is not registered in the design cache")]
    NotRegistered(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("model error: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, Error>;
