use std::path::Path;

use clickmat_core::compositor::AugmentConfig;
use clickmat_core::interaction::ClickSamplerConfig;
use clickmat_nn::optim::AdamConfig;
use clickmat_nn::{MattingConfig, RefinerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Cosine,
    Constant,
}

/// Every knob of the three training stages. The defaults are the desk-scale
/// setting; [`TrainConfig::paper_scale`] switches to the long schedules.
///
/// Loaded from TOML; unknown keys are rejected, missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub desk_scale: bool,
    pub base_lr: f64,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    pub epochs_matting: usize,
    pub epochs_uncertainty: usize,
    pub epochs_refine: usize,
    /// Caps the number of optimisation steps of every stage.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    /// Square training crop.
    pub crop: usize,
    pub augment: bool,
    pub augmentation: AugmentConfig,
    pub clicks: ClickSamplerConfig,
    pub grad_weight: f64,
    pub model: MattingConfig,
    pub refiner: RefinerConfig,
    pub refine_patch: usize,
    pub refine_patches_per_image: usize,
    pub refine_batch: usize,
    pub hard_lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            desk_scale: true,
            base_lr: 5e-4,
            schedule: Schedule::Cosine,
            adam: AdamConfig::default(),
            epochs_matting: 20,
            epochs_uncertainty: 10,
            epochs_refine: 10,
            max_steps: None,
            batch_size: 8,
            crop: 128,
            augment: true,
            augmentation: AugmentConfig::default(),
            clicks: ClickSamplerConfig::default(),
            grad_weight: 1.0,
            model: MattingConfig::default(),
            refiner: RefinerConfig::default(),
            refine_patch: 32,
            refine_patches_per_image: 8,
            refine_batch: 16,
            hard_lambda: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn paper_scale() -> Self {
        Self {
            desk_scale: false,
            epochs_matting: 150,
            epochs_uncertainty: 75,
            epochs_refine: 75,
            refine_patch: 64,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        // zero is accepted as a dry run that leaves every weight untouched
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return fail("base_lr must be finite and non-negative");
        }
        if self.epochs_matting == 0 || self.epochs_uncertainty == 0 || self.epochs_refine == 0 {
            return fail("epoch counts must be positive");
        }
        if self.batch_size == 0 || self.refine_batch == 0 {
            return fail("batch sizes must be positive");
        }
        if self.crop == 0 || self.crop % clickmat_nn::matting::STRIDE != 0 {
            return fail("crop must be a positive multiple of 32");
        }
        if self.refine_patch == 0 || self.refine_patch > self.crop {
            return fail("refine_patch must lie in 1..=crop");
        }
        if self.refine_patches_per_image == 0 {
            return fail("refine_patches_per_image must be positive");
        }
        if !(self.hard_lambda >= 0.0) || !(self.grad_weight >= 0.0) {
            return fail("loss weights must be non-negative");
        }
        if self.max_steps == Some(0) {
            return fail("max_steps must be positive when set");
        }
        self.model.validate()?;
        self.clicks.check()?;
        Ok(())
    }

    /// Learning rate at `step` of a stage lasting `total` steps.
    pub fn lr(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::Cosine => clickmat_nn::optim::cosine_lr(self.base_lr, step, total),
            Schedule::Constant => self.base_lr,
        }
    }

    pub(crate) fn stage_steps(&self, epochs: usize, steps_per_epoch: usize) -> usize {
        let total = epochs * steps_per_epoch;
        self.max_steps.map_or(total, |m| m.min(total))
    }
}
