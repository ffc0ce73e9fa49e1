use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("click {index} at ({row}, {col}) is outside the {height}x{width} image")]
    ClickOutOfBounds {
        index: usize,
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("empty region: {0}")]
    EmptyRegion(&'static str),
    #[error("patch size {k} does not fit a {height}x{width} field")]
    PatchTooLarge { k: usize, height: usize, width: usize },
    #[error("patches {0} and {1} overlap")]
    OverlappingPatches(usize, usize),
    #[error("crop {crop:?} larger than image {image:?}")]
    CropTooLarge {
        crop: (usize, usize),
        image: (usize, usize),
    },
    #[error("decode error: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
