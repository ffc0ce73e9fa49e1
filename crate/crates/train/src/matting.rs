//! Stage 1: the matting network alone, on the alpha objective.

use std::ops::ControlFlow;

use clickmat_core::compositor::MattingSample;
use clickmat_core::losses::{alpha_terms, LossReport};
use clickmat_core::seed::derive;
use clickmat_nn::optim::Adam;
use clickmat_nn::{zero_grad, MattingNet, Tensor};

use crate::config::TrainConfig;
use crate::data::{epoch_batches, make_batch, make_example, Batch, Example};
use crate::error::{Error, Result};
use crate::log::{EpochRecord, LogEntry, StepRecord, TrainLog};

pub const STAGE: &str = "matting";
pub(crate) const TAG: u64 = 1;

/// Called after every update with the step's record and the updated weights.
pub type Observer<'a, M> = &'a mut dyn FnMut(&StepRecord, &M) -> ControlFlow<()>;

/// Seed of the batch drawn at `step` of the stage with `tag`.
pub fn batch_seed(config: &TrainConfig, tag: u64, step: usize) -> u64 {
    derive(config.seed, &[tag, 0, step as u64])
}

pub(crate) fn shuffle_seed(config: &TrainConfig, tag: u64) -> u64 {
    derive(config.seed, &[tag, 1])
}

/// Mean alpha objective of a batch, its gradient (already divided by the
/// batch size) and the mean absolute error.
pub fn batch_loss(alpha: &Tensor, examples: &[Example], grad_weight: f64) -> Result<(LossReport, Tensor, f64)> {
    let mut reports = Vec::with_capacity(examples.len());
    let mut dalpha = alpha.map(|_| 0.0);
    let scale = 1.0 / examples.len() as f64;
    let mut mae = 0.0;
    for (i, ex) in examples.iter().enumerate() {
        let (h, w) = ex.sample.shape();
        let pred = alpha.sample(i);
        let gt = ex.sample.alpha_gt.data();
        let (report, grad) = alpha_terms(pred, gt, ex.sample.partition.labels(), h, w, grad_weight)?;
        for (d, g) in dalpha.sample_mut(i).iter_mut().zip(&grad) {
            *d = (g * scale) as f32;
        }
        mae += pred.iter().zip(gt).map(|(&p, &g)| (p - g).abs() as f64).sum::<f64>() / (h * w) as f64;
        reports.push(report);
    }
    let report = LossReport::mean(&reports).expect("non-empty batch");
    Ok((report, dalpha, mae * scale))
}

/// Recomputes the loss of a logged step from its batch seed, using `net` as
/// it was before that step's update.
pub fn replay_loss(net: &MattingNet, samples: &[MattingSample], record: &StepRecord, config: &TrainConfig) -> Result<LossReport> {
    let batch = make_batch(samples, &record.indices, config, record.batch_seed)?;
    let alpha = net.clone().forward_train(&batch.input)?;
    Ok(batch_loss(&alpha, &batch.examples, config.grad_weight)?.0)
}

/// Fixed, unaugmented examples with deterministic clicks for held-out scoring.
pub fn validation_examples(samples: &[MattingSample], config: &TrainConfig) -> Result<Vec<Example>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (h, w) = s.shape();
            let cfg = TrainConfig {
                augment: false,
                crop: h.min(w),
                ..config.clone()
            };
            make_example(s, &cfg, derive(config.seed, &[99, i as u64]))
        })
        .collect()
}

fn validation_loss(net: &MattingNet, examples: &[Example], grad_weight: f64) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let alpha = clickmat_nn::matting_forward(net, &ex.sample.image, &ex.hints)?;
        let (h, w) = alpha.shape();
        let (report, _) = alpha_terms(alpha.data(), ex.sample.alpha_gt.data(), ex.sample.partition.labels(), h, w, grad_weight)?;
        total += report.total;
    }
    Ok(total / examples.len().max(1) as f64)
}

pub fn train_matting(
    samples: &[MattingSample],
    validation: &[MattingSample],
    config: &TrainConfig,
    log: &mut TrainLog,
    mut observer: Option<Observer<MattingNet>>,
) -> Result<MattingNet> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut net = MattingNet::new(config.model.clone())?;
    let mut adam = Adam::new(config.adam);
    let steps_per_epoch = samples.len().div_ceil(config.batch_size);
    let total = config.stage_steps(config.epochs_matting, steps_per_epoch);
    let held_out = validation_examples(validation, config)?;
    let mut step = 0;
    'epochs: for epoch in 0..config.epochs_matting {
        let mut epoch_loss = Vec::new();
        for indices in epoch_batches(samples.len(), config.batch_size, shuffle_seed(config, TAG), epoch) {
            if step == total {
                break 'epochs;
            }
            let seed = batch_seed(config, TAG, step);
            let batch: Batch = make_batch(samples, &indices, config, seed)?;
            zero_grad(&mut net);
            let alpha = net.forward_train(&batch.input)?;
            let (loss, dalpha, mae) = batch_loss(&alpha, &batch.examples, config.grad_weight)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { stage: STAGE, step });
            }
            net.backward(&dalpha);
            let lr = config.lr(step, total);
            adam.step(&mut net, lr, &|_| true);
            epoch_loss.push(loss.total);
            let record = StepRecord {
                stage: STAGE.into(),
                epoch,
                step,
                lr,
                batch_seed: seed,
                indices,
                loss,
                mae,
            };
            tracing::debug!(step, loss = record.loss.total, mae, "matting step");
            log.push(LogEntry::Step(record.clone()))?;
            step += 1;
            if let Some(observe) = observer.as_mut() {
                if observe(&record, &net).is_break() {
                    break 'epochs;
                }
            }
        }
        let validation = (!held_out.is_empty())
            .then(|| validation_loss(&net, &held_out, config.grad_weight))
            .transpose()?;
        log.push(LogEntry::Epoch(EpochRecord {
            stage: STAGE.into(),
            epoch,
            mean_loss: epoch_loss.iter().sum::<f64>() / epoch_loss.len().max(1) as f64,
            validation,
        }))?;
    }
    Ok(net)
}
