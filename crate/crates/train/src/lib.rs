//! Staged training: the matting network first, then the uncertainty decoder
//! on the frozen matting weights, then the patch refiner on patches mined
//! from the frozen net's worst predictions.
//!
//! Everything is deterministic for a given seed: batches, augmentation and
//! simulated clicks are derived from per-step seeds that are logged, and data
//! is prepared on the training thread.

pub mod config;
pub mod data;
pub mod error;
pub mod hash;
pub mod log;
pub mod matting;
pub mod pipeline;
pub mod refinement;
pub mod uncertainty;

pub use config::{Schedule, TrainConfig};
pub use error::{Error, Result};
pub use hash::parameter_hash;
pub use log::{LogEntry, StepRecord, TrainLog};
pub use matting::train_matting;
pub use pipeline::{train_all, train_stages, Artifacts, Stage, StageOutputs, Trained};
pub use refinement::{train_refinement, RefineOutcome};
pub use uncertainty::train_uncertainty;
