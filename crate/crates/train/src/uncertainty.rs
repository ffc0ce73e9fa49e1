//! Stage 2: the uncertainty decoder on the Laplace likelihood, with the
//! encoder and alpha decoder frozen.

use std::collections::BTreeMap;

use clickmat_core::compositor::MattingSample;
use clickmat_core::losses::{laplace_terms, LossReport};
use clickmat_core::seed::derive;
use clickmat_nn::matting::SIGMA_DECODER;
use clickmat_nn::optim::Adam;
use clickmat_nn::{uncertainty_forward, zero_grad, MattingNet, Tensor};

use crate::config::TrainConfig;
use crate::data::{epoch_batches, make_batch, Example};
use crate::error::{Error, Result};
use crate::hash::parameter_hash;
use crate::log::{EpochRecord, LogEntry, StepRecord, TrainLog};
use crate::matting::{batch_seed, shuffle_seed, validation_examples, Observer};

pub const STAGE: &str = "uncertainty";
const TAG: u64 = 2;

pub fn is_frozen(name: &str) -> bool {
    !name.starts_with(SIGMA_DECODER)
}

fn nll_report(value: f64, pixels: usize) -> LossReport {
    LossReport {
        total: value,
        components: BTreeMap::from([("nll".to_string(), value)]),
        weights: BTreeMap::from([("nll".to_string(), 1.0)]),
        pixel_counts: BTreeMap::from([("all".to_string(), pixels)]),
    }
}

/// Mean Laplace NLL of the batch and its gradient with respect to sigma.
pub fn batch_nll(alpha: &Tensor, sigma: &Tensor, examples: &[Example]) -> Result<(LossReport, Tensor, f64)> {
    let mut dsigma = sigma.map(|_| 0.0);
    let scale = 1.0 / examples.len() as f64;
    let (mut value, mut mae, mut pixels) = (0.0, 0.0, 0);
    for (i, ex) in examples.iter().enumerate() {
        let gt = ex.sample.alpha_gt.data();
        let terms = laplace_terms(alpha.sample(i), sigma.sample(i), gt)?;
        value += terms.value * scale;
        for (d, g) in dsigma.sample_mut(i).iter_mut().zip(&terms.grad_sigma) {
            *d = (g * scale) as f32;
        }
        let n = gt.len();
        mae += alpha.sample(i).iter().zip(gt).map(|(&p, &g)| (p - g).abs() as f64).sum::<f64>() / n as f64 * scale;
        pixels += n;
    }
    Ok((nll_report(value, pixels), dsigma, mae))
}

/// Mean Laplace NLL of evaluation-mode predictions.
pub fn held_out_nll(net: &MattingNet, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let out = uncertainty_forward(net, &ex.sample.image, &ex.hints)?;
        let sigma = out.sigma.expect("uncertainty head present");
        total += laplace_terms(out.alpha.data(), sigma.data(), ex.sample.alpha_gt.data())?.value;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Attaches a fresh uncertainty decoder to `net` and trains only that decoder.
pub fn train_uncertainty(
    samples: &[MattingSample],
    validation: &[MattingSample],
    mut net: MattingNet,
    config: &TrainConfig,
    log: &mut TrainLog,
    mut observer: Option<Observer<MattingNet>>,
) -> Result<MattingNet> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if net.config != config.model {
        return Err(Error::Config("matting checkpoint does not match the configured model".into()));
    }
    let frozen_before = parameter_hash(&net, &is_frozen);
    net.attach_uncertainty(derive(config.seed, &[TAG, 2]));
    let mut adam = Adam::new(config.adam);
    let steps_per_epoch = samples.len().div_ceil(config.batch_size);
    let total = config.stage_steps(config.epochs_uncertainty, steps_per_epoch);
    let held_out = validation_examples(validation, config)?;
    let mut step = 0;
    'epochs: for epoch in 0..config.epochs_uncertainty {
        let mut epoch_loss = Vec::new();
        for indices in epoch_batches(samples.len(), config.batch_size, shuffle_seed(config, TAG), epoch) {
            if step == total {
                break 'epochs;
            }
            let seed = batch_seed(config, TAG, step);
            let batch = make_batch(samples, &indices, config, seed)?;
            zero_grad(&mut net);
            let (alpha, sigma) = net.forward_train_sigma(&batch.input)?;
            let (loss, dsigma, mae) = batch_nll(&alpha, &sigma, &batch.examples)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { stage: STAGE, step });
            }
            net.backward_sigma(&dsigma);
            let lr = config.lr(step, total);
            adam.step(&mut net, lr, &|name| !is_frozen(name));
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
            log.push(LogEntry::Step(record.clone()))?;
            step += 1;
            if let Some(observe) = observer.as_mut() {
                if observe(&record, &net).is_break() {
                    break 'epochs;
                }
            }
        }
        let validation = (!held_out.is_empty()).then(|| held_out_nll(&net, &held_out)).transpose()?;
        log.push(LogEntry::Epoch(EpochRecord {
            stage: STAGE.into(),
            epoch,
            mean_loss: epoch_loss.iter().sum::<f64>() / epoch_loss.len().max(1) as f64,
            validation,
        }))?;
    }
    if parameter_hash(&net, &is_frozen) != frozen_before {
        return Err(Error::FrozenParametersChanged(STAGE));
    }
    Ok(net)
}
