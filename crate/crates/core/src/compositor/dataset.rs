//! Desk-scale dataset generation and the on-disk layout:
//!
//! ```text
//! <root>/manifest.jsonl
//! <root>/fg/<id>.png        16-bit RGB foreground colours
//! <root>/bg/<id>.png        16-bit RGB background (distractor object baked in)
//! <root>/alpha/<id>.png     16-bit grayscale ground truth
//! <root>/composite/<id>.png 16-bit RGB observed image
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::{generate_background, generate_synthetic_foreground, ForegroundMode};
use super::{composite, MattingSample, PartitionRadii};
use crate::error::{Error, Result};
use crate::io;
use crate::seed::derive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub foregrounds: usize,
    pub backgrounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub height: usize,
    pub width: usize,
    pub train: SplitConfig,
    pub test: SplitConfig,
    /// Share of foregrounds generated with two objects, of which one is the target.
    pub two_object_share: f64,
    pub radii: PartitionRadii,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            height: 128,
            width: 128,
            train: SplitConfig {
                foregrounds: 64,
                backgrounds: 4,
            },
            test: SplitConfig {
                foregrounds: 16,
                backgrounds: 2,
            },
            two_object_share: 0.5,
            radii: PartitionRadii::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub split: String,
    pub seed: u64,
    pub fg_index: usize,
    pub bg_index: usize,
    pub objects: usize,
    /// Index of the target object in two-object samples.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<usize>,
    pub fg: String,
    pub bg: String,
    pub alpha: String,
    pub composite: String,
}

fn split_tag(split: &str) -> u64 {
    split.bytes().fold(0u64, |acc, b| acc.wrapping_mul(131).wrapping_add(b as u64))
}

/// Builds one split in memory. Foreground `i` is composited over `backgrounds`
/// backgrounds of its own, so no two samples share a background.
pub fn generate_split(config: &DatasetConfig, split: &str) -> Result<Vec<(ManifestRecord, MattingSample)>> {
    let sizes = match split {
        "train" => config.train,
        "test" => config.test,
        other => return Err(Error::Invalid(format!("unknown split {other}"))),
    };
    let (h, w) = (config.height, config.width);
    let tag = split_tag(split);
    let mut out = Vec::with_capacity(sizes.foregrounds * sizes.backgrounds);
    for i in 0..sizes.foregrounds {
        let fg_seed = derive(config.master_seed, &[tag, 0, i as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(fg_seed);
        let mode = if rng.random_bool(config.two_object_share.clamp(0.0, 1.0)) {
            ForegroundMode::TwoObjects
        } else {
            ForegroundMode::Single
        };
        let synth = generate_synthetic_foreground(fg_seed, h, w, mode);
        for j in 0..sizes.backgrounds {
            let bg = generate_background(derive(config.master_seed, &[tag, 1, i as u64, j as u64]), h, w);
            let seed = derive(config.master_seed, &[tag, 2, i as u64, j as u64]);
            let id = format!("{split}_{i:03}_{j:02}");
            let (bg, alpha, target) = match mode {
                ForegroundMode::Single => (bg, synth.alpha.clone(), None),
                ForegroundMode::TwoObjects => {
                    let target = (ChaCha8Rng::seed_from_u64(seed).random_range(0..2)) as usize;
                    let distractor = &synth.objects[1 - target];
                    let bg = composite(&synth.fg, &bg, distractor)?;
                    (bg, synth.objects[target].clone(), Some(target))
                }
            };
            let sample = MattingSample::new(synth.fg.clone(), bg, alpha, config.radii)?;
            let record = ManifestRecord {
                fg: format!("fg/{id}.png"),
                bg: format!("bg/{id}.png"),
                alpha: format!("alpha/{id}.png"),
                composite: format!("composite/{id}.png"),
                id,
                split: split.to_string(),
                seed,
                fg_index: i,
                bg_index: j,
                objects: synth.objects.len(),
                target,
            };
            out.push((record, sample));
        }
    }
    Ok(out)
}

/// A two-object composite whose ground truth is one object, with the other
/// object's matte kept for placing oracle clicks.
#[derive(Debug, Clone)]
pub struct AmbiguityCase {
    pub sample: MattingSample,
    pub distractor: crate::domain::AlphaMatte,
}

/// `count` two-object test composites from a seed space disjoint from the splits.
pub fn ambiguity_set(config: &DatasetConfig, count: usize) -> Result<Vec<AmbiguityCase>> {
    let (h, w) = (config.height, config.width);
    let tag = split_tag("ambiguity");
    (0..count)
        .map(|i| {
            let seed = derive(config.master_seed, &[tag, i as u64]);
            let synth = generate_synthetic_foreground(seed, h, w, ForegroundMode::TwoObjects);
            let bg = generate_background(derive(seed, &[1]), h, w);
            let target = (ChaCha8Rng::seed_from_u64(seed).random_range(0..2)) as usize;
            let distractor = synth.objects[1 - target].clone();
            let bg = composite(&synth.fg, &bg, &distractor)?;
            let sample = MattingSample::new(synth.fg, bg, synth.objects[target].clone(), config.radii)?;
            Ok(AmbiguityCase { sample, distractor })
        })
        .collect()
}

/// Writes both splits under `root` and returns the manifest records.
pub fn write_dataset(root: &Path, config: &DatasetConfig) -> Result<Vec<ManifestRecord>> {
    for dir in ["fg", "bg", "alpha", "composite"] {
        std::fs::create_dir_all(root.join(dir))?;
    }
    let mut records = Vec::new();
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(root.join("manifest.jsonl"))?);
    for split in ["train", "test"] {
        for (record, sample) in generate_split(config, split)? {
            io::write_image(&root.join(&record.fg), &sample.fg)?;
            io::write_image(&root.join(&record.bg), &sample.bg)?;
            io::write_alpha(&root.join(&record.alpha), &sample.alpha_gt)?;
            io::write_image(&root.join(&record.composite), &sample.image)?;
            serde_json::to_writer(&mut manifest, &record)?;
            manifest.write_all(b"\n")?;
            records.push(record);
        }
    }
    manifest.flush()?;
    Ok(records)
}

/// Reads `root/manifest.jsonl` and loads every sample of `split` (all splits when `None`).
pub fn load_manifest(
    root: &Path,
    split: Option<&str>,
    radii: PartitionRadii,
) -> Result<Vec<(ManifestRecord, MattingSample)>> {
    let file = std::fs::File::open(root.join("manifest.jsonl"))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line)?;
        if split.is_some_and(|s| s != record.split) {
            continue;
        }
        let fg = io::read_image(&root.join(&record.fg))?;
        let bg = io::read_image(&root.join(&record.bg))?;
        let alpha = io::read_alpha(&root.join(&record.alpha))?;
        let image = io::read_image(&root.join(&record.composite))?;
        let mut sample = MattingSample::new(fg, bg, alpha, radii)?;
        sample.image = image;
        out.push((record, sample));
    }
    Ok(out)
}
