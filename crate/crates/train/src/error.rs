use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] clickmat_core::Error),
    #[error(transparent)]
    Model(#[from] clickmat_nn::Error),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{stage} training diverged at step {step}: loss is not finite")]
    Diverged { stage: &'static str, step: usize },
    #[error("{0}: parameters that must stay frozen changed")]
    FrozenParametersChanged(&'static str),
    #[error("the training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
