//! CPU convolutional networks for click-guided matting.
//!
//! A small NCHW tensor type, convolution/normalisation layers with explicit
//! backward passes, the matting network with its uncertainty decoder, the
//! patch refiner, Adam, safetensors checkpoints and evaluation-mode entry
//! points on the core domain types.

pub mod checkpoint;
pub mod error;
mod gemm;
pub mod inference;
pub mod layers;
pub mod matting;
pub mod optim;
pub mod refiner;
pub mod strategy;
pub mod tensor;

pub use error::{Error, Result};
pub use inference::{matting_forward, predict, refine_matte, refinement_forward, uncertainty_forward, ModelOutput};
pub use layers::{parameter_count, zero_grad, Layer, Module, Param};
pub use matting::{MattingConfig, MattingNet};
pub use refiner::{Refiner, RefinerConfig};
pub use strategy::{RefineRequest, Refined, RefinementStrategy, StrategyRegistry};
pub use tensor::Tensor;
