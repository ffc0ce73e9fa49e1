use axum::http::StatusCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("could not decode image: {0}")]
    Decode(String),
    #[error("image of {height}x{width} exceeds the {max_pixels}-pixel upload limit")]
    TooLarge {
        height: usize,
        width: usize,
        max_pixels: usize,
    },
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("click ({row}, {col}) is outside the {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("no clicks to undo")]
    NothingToUndo,
    #[error("no refiner checkpoint is loaded")]
    RefinerUnavailable,
    #[error("the loaded model has no uncertainty head")]
    UncertaintyUnavailable,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Core(#[from] clickmat_core::Error),
    #[error(transparent)]
    Model(#[from] clickmat_nn::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Decode(_) | ServiceError::OutOfBounds { .. } | ServiceError::InvalidRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::NothingToUndo => StatusCode::CONFLICT,
            ServiceError::RefinerUnavailable | ServiceError::UncertaintyUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Core(_) | ServiceError::Model(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
