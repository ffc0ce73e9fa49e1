//! Turning dataset samples into network batches. Every random choice is a
//! function of a batch seed, so a logged seed rebuilds the exact batch.

use clickmat_core::compositor::{apply_augment, AugmentConfig, AugmentParams, MattingSample};
use clickmat_core::interaction::{render_hint_map, sample_clicks};
use clickmat_core::seed::derive;
use clickmat_core::HintMap;
use clickmat_nn::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::Result;

/// One training example after augmentation, with its simulated clicks.
#[derive(Debug, Clone)]
pub struct Example {
    pub sample: MattingSample,
    pub hints: HintMap,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub input: Tensor,
    pub examples: Vec<Example>,
}

fn augment_config(config: &TrainConfig) -> AugmentConfig {
    let crop = Some((config.crop, config.crop));
    if config.augment {
        AugmentConfig { crop, ..config.augmentation }
    } else {
        AugmentConfig {
            max_rotation_deg: 0.0,
            min_scale: 1.0,
            max_scale: 1.0,
            flip_prob: 0.0,
            crop,
        }
    }
}

/// Augments `sample` and draws its clicks from `seed`.
pub fn make_example(sample: &MattingSample, config: &TrainConfig, seed: u64) -> Result<Example> {
    let (h, w) = sample.shape();
    let params = AugmentParams::sample(&augment_config(config), h, w, derive(seed, &[0]))?;
    let sample = apply_augment(sample, &params)?;
    let clicks = sample_clicks(&sample.alpha_gt, &config.clicks.with_seed(derive(seed, &[1])))?;
    let (h, w) = sample.shape();
    let hints = render_hint_map(&clicks, h, w)?;
    Ok(Example { sample, hints })
}

pub fn make_batch(samples: &[MattingSample], indices: &[usize], config: &TrainConfig, batch_seed: u64) -> Result<Batch> {
    let examples = indices
        .iter()
        .enumerate()
        .map(|(slot, &i)| make_example(&samples[i], config, derive(batch_seed, &[slot as u64])))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<Tensor> = examples
        .iter()
        .map(|e| Tensor::from_image_hint(&e.sample.image, &e.hints))
        .collect();
    Ok(Batch {
        input: Tensor::stack(&inputs),
        examples,
    })
}

/// Sample order of every epoch, each a seeded shuffle, cut into batches.
/// The last batch of an epoch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(seed, &[epoch as u64])));
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}
