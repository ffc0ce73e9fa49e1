//! All three stages end to end, writing one checkpoint per stage.

use std::path::{Path, PathBuf};

use clickmat_core::compositor::MattingSample;
use clickmat_nn::checkpoint::{load_matting, save_matting, save_refiner};
use clickmat_nn::{MattingNet, Refiner};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::log::TrainLog;
use crate::{matting, refinement, uncertainty};

pub const MATTING_CHECKPOINT: &str = "matting.safetensors";
pub const UNCERTAINTY_CHECKPOINT: &str = "uncertainty.safetensors";
pub const REFINER_CHECKPOINT: &str = "refiner.safetensors";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_ECHO: &str = "train_config.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub matting: PathBuf,
    pub uncertainty: PathBuf,
    pub refiner: PathBuf,
    pub log: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            matting: dir.join(MATTING_CHECKPOINT),
            uncertainty: dir.join(UNCERTAINTY_CHECKPOINT),
            refiner: dir.join(REFINER_CHECKPOINT),
            log: dir.join(LOG_FILE),
        }
    }
}

/// Trained networks of a full run.
pub struct Trained {
    /// Matting net with its uncertainty decoder attached.
    pub net: MattingNet,
    pub refiner: Refiner,
    pub log: TrainLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Matting,
    Uncertainty,
    Refine,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Matting, Stage::Uncertainty, Stage::Refine];
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matting" => Ok(Stage::Matting),
            "uncertainty" => Ok(Stage::Uncertainty),
            "refine" => Ok(Stage::Refine),
            other => Err(Error::Config(format!(
                "unknown stage {other:?} (expected matting, uncertainty or refine)"
            ))),
        }
    }
}

/// Outputs of a partial run; stages that were skipped are `None`.
pub struct StageOutputs {
    pub net: Option<MattingNet>,
    pub refiner: Option<Refiner>,
    pub log: TrainLog,
}

/// Runs the selected stages in order. A stage whose predecessor was not run
/// picks up the predecessor's checkpoint from `out_dir`.
pub fn train_stages(
    samples: &[MattingSample],
    validation: &[MattingSample],
    config: &TrainConfig,
    out_dir: &Path,
    stages: &[Stage],
) -> Result<(StageOutputs, Artifacts)> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(CONFIG_ECHO), config.to_toml())?;
    let artifacts = Artifacts::in_dir(out_dir);
    let mut log = TrainLog::to_file(&artifacts.log)?;
    let run = |s: Stage| stages.contains(&s);

    let mut net = None;
    if run(Stage::Matting) {
        tracing::info!(samples = samples.len(), "training matting network");
        let trained = matting::train_matting(samples, validation, config, &mut log, None)?;
        save_matting(&artifacts.matting, &trained)?;
        net = Some(trained);
    }
    if run(Stage::Uncertainty) {
        let base = match net.take() {
            Some(n) => n,
            None => {
                let mut n = load_matting(&artifacts.matting)?;
                n.detach_uncertainty();
                n
            }
        };
        tracing::info!("training uncertainty decoder");
        let trained = uncertainty::train_uncertainty(samples, validation, base, config, &mut log, None)?;
        save_matting(&artifacts.uncertainty, &trained)?;
        net = Some(trained);
    }
    let mut refiner = None;
    if run(Stage::Refine) {
        let base = match net.take() {
            Some(n) => n,
            None => load_matting(&artifacts.uncertainty)?,
        };
        tracing::info!("training refinement network");
        let outcome = refinement::train_refinement(samples, &base, config, &mut log)?;
        save_refiner(&artifacts.refiner, &outcome.refiner)?;
        refiner = Some(outcome.refiner);
        net = Some(base);
    }
    Ok((StageOutputs { net, refiner, log }, artifacts))
}

/// Runs matting, uncertainty and refinement training in order and saves each stage.
pub fn train_all(
    samples: &[MattingSample],
    validation: &[MattingSample],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<(Trained, Artifacts)> {
    let (out, artifacts) = train_stages(samples, validation, config, out_dir, &Stage::ALL)?;
    let trained = Trained {
        net: out.net.expect("uncertainty stage ran"),
        refiner: out.refiner.expect("refine stage ran"),
        log: out.log,
    };
    Ok((trained, artifacts))
}
