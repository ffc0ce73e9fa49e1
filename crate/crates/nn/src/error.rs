use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] clickmat_core::Error),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input is {actual:?}, expected {expected}")]
    InputShape { expected: String, actual: (usize, usize) },
    #[error("the model has no uncertainty decoder")]
    MissingUncertaintyHead,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
