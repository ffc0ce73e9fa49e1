//! Core, model-free building blocks of the click-guided matting pipeline.
//!
//! Everything in this crate is a pure function of its inputs (and a seed where
//! randomness is involved): value types with validation, the user-click hint
//! channel and its training-time simulator, alpha compositing and synthetic
//! data, the training objectives with analytic gradients, the matting metrics
//! and sparsification analysis, and uncertainty-guided patch selection.

pub mod compositor;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod interaction;
pub mod io;
pub mod losses;
pub mod morphology;
pub mod patches;
pub mod seed;

pub use domain::{
    AlphaMatte, ClickPoint, ClickSet, HintMap, Image, Polarity, Region, RegionPartition,
    UncertaintyMap, Validate, ValidationReport, SIGMA_FLOOR,
};
pub use error::{Error, Result};
