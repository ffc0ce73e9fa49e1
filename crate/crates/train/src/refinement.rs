//! Stage 3: the patch refiner, trained on the patches where the frozen
//! matting net errs most.

use std::collections::BTreeMap;

use clickmat_core::compositor::MattingSample;
use clickmat_core::losses::{hard_set, refine_terms, LossReport};
use clickmat_core::patches::mine_training_patches;
use clickmat_core::seed::derive;
use clickmat_nn::optim::Adam;
use clickmat_nn::{matting_forward, zero_grad, MattingNet, Refiner, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::data::make_example;
use crate::error::{Error, Result};
use crate::hash::parameter_hash;
use crate::log::{EpochRecord, LogEntry, StepRecord, TrainLog};

pub const STAGE: &str = "refine";
const TAG: u64 = 3;

/// One mined training patch: RGB + predicted alpha, and the true alpha.
#[derive(Debug, Clone)]
pub struct PatchItem {
    pub input: Tensor,
    pub target: Vec<f32>,
    pub sample: usize,
    pub top: usize,
    pub left: usize,
}

impl PatchItem {
    pub fn predicted(&self) -> &[f32] {
        let k2 = self.target.len();
        &self.input.data[3 * k2..]
    }
}

/// Predicts every sample with fresh clicks and keeps its worst disjoint
/// windows (by summed absolute error). Windows without error are dropped.
pub fn mine_patch_set(net: &MattingNet, samples: &[MattingSample], config: &TrainConfig, epoch: usize) -> Result<Vec<PatchItem>> {
    let k = config.refine_patch;
    let mut items = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let ex = make_example(sample, config, derive(config.seed, &[TAG, 0, epoch as u64, i as u64]))?;
        let alpha = matting_forward(net, &ex.sample.image, &ex.hints)?;
        let patches = mine_training_patches(&alpha, &ex.sample.alpha_gt, k, config.refine_patches_per_image)?;
        for p in patches.into_iter().filter(|p| p.score > 0.0) {
            let image = ex.sample.image.crop(p.top, p.left, k, k);
            let predicted = alpha.crop(p.top, p.left, k, k);
            items.push(PatchItem {
                input: Tensor::from_image_alpha(&image, predicted.data()),
                target: ex.sample.alpha_gt.crop(p.top, p.left, k, k).into_data(),
                sample: i,
                top: p.top,
                left: p.left,
            });
        }
    }
    Ok(items)
}

/// Mean absolute error over all patch pixels and over each patch's hard set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchErrors {
    pub mae: f64,
    pub hard_mae: f64,
}

fn patch_errors<'a>(pairs: impl Iterator<Item = (&'a [f32], &'a [f32])>) -> PatchErrors {
    let (mut mae, mut hard, mut n) = (0.0, 0.0, 0usize);
    for (pred, gt) in pairs {
        let err = |i: usize| (pred[i] - gt[i]).abs() as f64;
        mae += (0..pred.len()).map(err).sum::<f64>() / pred.len() as f64;
        let set = hard_set(pred, gt);
        hard += set.iter().map(|&i| err(i)).sum::<f64>() / set.len() as f64;
        n += 1;
    }
    let n = n.max(1) as f64;
    PatchErrors {
        mae: mae / n,
        hard_mae: hard / n,
    }
}

/// Errors of the unrefined predictions, or of `refiner`'s output when given.
pub fn evaluate_patches(refiner: Option<&Refiner>, items: &[PatchItem]) -> Result<PatchErrors> {
    match refiner {
        None => Ok(patch_errors(items.iter().map(|it| (it.predicted(), it.target.as_slice())))),
        Some(r) => {
            let outputs = items.iter().map(|it| r.forward(&it.input)).collect::<clickmat_nn::Result<Vec<_>>>()?;
            Ok(patch_errors(outputs.iter().zip(items).map(|(o, it)| (o.data.as_slice(), it.target.as_slice()))))
        }
    }
}

fn refine_report(value: f64, pixels: usize, lambda: f64) -> LossReport {
    LossReport {
        total: value,
        components: BTreeMap::from([("refine".to_string(), value)]),
        weights: BTreeMap::from([("refine".to_string(), 1.0), ("hard_lambda".to_string(), lambda)]),
        pixel_counts: BTreeMap::from([("patch".to_string(), pixels)]),
    }
}

#[derive(Debug)]
pub struct RefineOutcome {
    pub refiner: Refiner,
    /// False when nothing could be mined and the identity refiner was returned.
    pub trained: bool,
    pub patches_per_epoch: Vec<usize>,
}

pub fn train_refinement(
    samples: &[MattingSample],
    net: &MattingNet,
    config: &TrainConfig,
    log: &mut TrainLog,
) -> Result<RefineOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let matting_before = parameter_hash(net, &|_| true);
    let mut refiner = Refiner::new(clickmat_nn::RefinerConfig {
        seed: derive(config.seed, &[TAG, 1]),
        ..config.refiner.clone()
    })?;
    let mut adam = Adam::new(config.adam);
    let mut patches_per_epoch = Vec::new();
    let mut total = None;
    let mut step = 0;
    'epochs: for epoch in 0..config.epochs_refine {
        let items = mine_patch_set(net, samples, config, epoch)?;
        patches_per_epoch.push(items.len());
        if items.is_empty() {
            let message = format!("epoch {epoch}: no patch with non-zero error to train on");
            tracing::warn!("{message}");
            log.push(LogEntry::Note {
                stage: STAGE.into(),
                message,
            })?;
            if epoch == 0 {
                return Ok(RefineOutcome {
                    refiner,
                    trained: false,
                    patches_per_epoch,
                });
            }
            continue;
        }
        // the schedule length follows the first epoch's patch count
        let total = *total.get_or_insert_with(|| {
            config.stage_steps(config.epochs_refine, items.len().div_ceil(config.refine_batch))
        });
        let epoch_seed = derive(config.seed, &[TAG, 2, epoch as u64]);
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut epoch_loss = Vec::new();
        for chunk in order.chunks(config.refine_batch) {
            if step >= total {
                break 'epochs;
            }
            let batch: Vec<&PatchItem> = chunk.iter().map(|&i| &items[i]).collect();
            let input = Tensor::stack(&batch.iter().map(|it| it.input.clone()).collect::<Vec<_>>());
            zero_grad(&mut refiner);
            let out = refiner.forward_train(&input)?;
            let scale = 1.0 / batch.len() as f64;
            let mut grad = out.map(|_| 0.0);
            let (mut value, mut mae) = (0.0, 0.0);
            for (j, it) in batch.iter().enumerate() {
                let terms = refine_terms(out.sample(j), &it.target, config.hard_lambda)?;
                value += terms.value * scale;
                for (d, g) in grad.sample_mut(j).iter_mut().zip(&terms.grad) {
                    *d = (g * scale) as f32;
                }
                mae += out.sample(j).iter().zip(&it.target).map(|(&p, &g)| (p - g).abs() as f64).sum::<f64>()
                    / it.target.len() as f64
                    * scale;
            }
            if !value.is_finite() {
                return Err(Error::Diverged { stage: STAGE, step });
            }
            refiner.backward(&grad);
            let lr = config.lr(step, total);
            adam.step(&mut refiner, lr, &|_| true);
            epoch_loss.push(value);
            log.push(LogEntry::Step(StepRecord {
                stage: STAGE.into(),
                epoch,
                step,
                lr,
                batch_seed: epoch_seed,
                indices: chunk.to_vec(),
                loss: refine_report(value, batch.len() * batch[0].target.len(), config.hard_lambda),
                mae,
            }))?;
            step += 1;
        }
        log.push(LogEntry::Epoch(EpochRecord {
            stage: STAGE.into(),
            epoch,
            mean_loss: epoch_loss.iter().sum::<f64>() / epoch_loss.len().max(1) as f64,
            validation: None,
        }))?;
    }
    if parameter_hash(net, &|_| true) != matting_before {
        return Err(Error::FrozenParametersChanged(STAGE));
    }
    Ok(RefineOutcome {
        refiner,
        trained: true,
        patches_per_epoch,
    })
}
