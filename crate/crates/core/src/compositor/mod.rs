//! Training data synthesis: alpha compositing, trimap-style region partitions,
//! geometric augmentation and procedural foregrounds/backgrounds.

mod augment;
mod dataset;
mod synth;

pub use augment::{augment, apply_augment, AugmentConfig, AugmentParams};
pub use dataset::{
    ambiguity_set, generate_split, AmbiguityCase, load_manifest, write_dataset, DatasetConfig, ManifestRecord,
    SplitConfig,
};
pub use synth::{generate_background, generate_synthetic_foreground, ForegroundMode, SyntheticForeground};

use crate::domain::{ensure_same_shape, AlphaMatte, Image, Region, RegionPartition};
use crate::error::{Error, Result};
use crate::morphology::{dilate, erode};

/// A composite together with the layers that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MattingSample {
    pub image: Image,
    pub alpha_gt: AlphaMatte,
    pub partition: RegionPartition,
    pub fg: Image,
    pub bg: Image,
}

impl MattingSample {
    pub fn new(fg: Image, bg: Image, alpha_gt: AlphaMatte, radii: PartitionRadii) -> Result<Self> {
        let image = composite(&fg, &bg, &alpha_gt)?;
        let partition = make_partition(&alpha_gt, radii.dilate, radii.erode)?;
        Ok(Self {
            image,
            alpha_gt,
            partition,
            fg,
            bg,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.image.shape()
    }

    /// Largest per-channel deviation between `image` and the recomposited layers.
    pub fn composite_residual(&self) -> f32 {
        let recomposed = composite(&self.fg, &self.bg, &self.alpha_gt).expect("sample shapes agree");
        self.image
            .data()
            .iter()
            .zip(recomposed.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// `I = alpha * F + (1 - alpha) * B`, clamped to `[0, 1]`.
pub fn composite(fg: &Image, bg: &Image, alpha: &AlphaMatte) -> Result<Image> {
    ensure_same_shape(fg.shape(), bg.shape())?;
    ensure_same_shape(fg.shape(), alpha.shape())?;
    let data = fg
        .data()
        .chunks_exact(3)
        .zip(bg.data().chunks_exact(3))
        .zip(alpha.data())
        .flat_map(|((f, b), &a)| {
            let mix = |i: usize| (a * f[i] + (1.0 - a) * b[i]).clamp(0.0, 1.0);
            [mix(0), mix(1), mix(2)]
        })
        .collect();
    Ok(Image::from_raw_unchecked(fg.height(), fg.width(), data))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PartitionRadii {
    pub dilate: usize,
    pub erode: usize,
}

impl Default for PartitionRadii {
    fn default() -> Self {
        Self { dilate: 3, erode: 3 }
    }
}

/// Pixels that are fractional, or opaque/clear pixels with a 4-neighbour of different alpha.
pub fn unknown_band(alpha: &AlphaMatte) -> Vec<bool> {
    let (h, w) = alpha.shape();
    let a = alpha.data();
    (0..h * w)
        .map(|i| {
            let v = a[i];
            if v > 0.0 && v < 1.0 {
                return true;
            }
            let (r, c) = (i / w, i % w);
            (c > 0 && a[i - 1] != v)
                || (c + 1 < w && a[i + 1] != v)
                || (r > 0 && a[i - w] != v)
                || (r + 1 < h && a[i + w] != v)
        })
        .collect()
}

/// Trimap-style partition: the unknown band dilated by `dilate_r` is TRANSITION;
/// opaque (clear) pixels surviving an erosion by `erode_r` and outside the
/// band are FOREGROUND (BACKGROUND); anything left over is TRANSITION.
pub fn make_partition(alpha: &AlphaMatte, dilate_r: usize, erode_r: usize) -> Result<RegionPartition> {
    if dilate_r < 1 || erode_r < 1 {
        return Err(Error::Invalid("partition radii must be at least 1".into()));
    }
    let (h, w) = alpha.shape();
    let band = dilate(&unknown_band(alpha), h, w, dilate_r as f64);
    let opaque: Vec<bool> = alpha.data().iter().map(|&a| a >= 1.0).collect();
    let clear: Vec<bool> = alpha.data().iter().map(|&a| a <= 0.0).collect();
    let fg = erode(&opaque, h, w, erode_r as f64);
    let bg = erode(&clear, h, w, erode_r as f64);
    let labels = (0..h * w)
        .map(|i| {
            if band[i] {
                Region::Transition
            } else if fg[i] {
                Region::Foreground
            } else if bg[i] {
                Region::Background
            } else {
                Region::Transition
            }
        })
        .collect();
    RegionPartition::new(h, w, labels)
}
