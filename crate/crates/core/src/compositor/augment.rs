use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{composite, MattingSample};
use crate::domain::{AlphaMatte, Image, Region, RegionPartition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f32,
    pub min_scale: f32,
    pub max_scale: f32,
    pub flip_prob: f64,
    /// Output size; `None` keeps the input size.
    pub crop: Option<(usize, usize)>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            min_scale: 0.8,
            max_scale: 1.25,
            flip_prob: 0.5,
            crop: None,
        }
    }
}

/// One concrete draw of the geometric transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f32,
    pub scale: f32,
    pub flip: bool,
    pub crop_top: usize,
    pub crop_left: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl AugmentParams {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            rotation_deg: 0.0,
            scale: 1.0,
            flip: false,
            crop_top: 0,
            crop_left: 0,
            out_height: height,
            out_width: width,
        }
    }

    pub fn sample(config: &AugmentConfig, height: usize, width: usize, seed: u64) -> Result<Self> {
        let (out_height, out_width) = config.crop.unwrap_or((height, width));
        if out_height > height || out_width > width {
            return Err(Error::CropTooLarge {
                crop: (out_height, out_width),
                image: (height, width),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rotation_deg = if config.max_rotation_deg > 0.0 {
            rng.random_range(-config.max_rotation_deg..=config.max_rotation_deg)
        } else {
            0.0
        };
        let scale = if config.max_scale > config.min_scale {
            let (lo, hi) = (config.min_scale.ln(), config.max_scale.ln());
            rng.random_range(lo..=hi).exp()
        } else {
            config.min_scale
        };
        let flip = rng.random_bool(config.flip_prob.clamp(0.0, 1.0));
        let crop_top = rng.random_range(0..=height - out_height);
        let crop_left = rng.random_range(0..=width - out_width);
        Ok(Self {
            rotation_deg,
            scale,
            flip,
            crop_top,
            crop_left,
            out_height,
            out_width,
        })
    }

    fn has_warp(&self) -> bool {
        self.rotation_deg != 0.0 || self.scale != 1.0
    }
}

/// Draws parameters from `seed` and applies them to every layer of `sample`.
pub fn augment(sample: &MattingSample, config: &AugmentConfig, seed: u64) -> Result<MattingSample> {
    let (h, w) = sample.shape();
    let params = AugmentParams::sample(config, h, w, seed)?;
    apply_augment(sample, &params)
}

/// Rotation and scaling about the image centre, then a crop, then a horizontal flip.
///
/// After a warp the composite is rebuilt from the warped layers, and warped
/// partition labels are demoted to TRANSITION wherever interpolation made the
/// warped alpha disagree with them.
pub fn apply_augment(sample: &MattingSample, params: &AugmentParams) -> Result<MattingSample> {
    let (h, w) = sample.shape();
    if params.out_height > h || params.out_width > w || params.crop_top + params.out_height > h || params.crop_left + params.out_width > w {
        return Err(Error::CropTooLarge {
            crop: (params.out_height, params.out_width),
            image: (h, w),
        });
    }
    let mut out = sample.clone();
    if params.has_warp() {
        let warp = Warp::new(h, w, params.rotation_deg, params.scale);
        let fg = warp.bilinear(out.fg.data(), 3);
        let bg = warp.bilinear(out.bg.data(), 3);
        let alpha = warp.bilinear(out.alpha_gt.data(), 1);
        let labels = warp.nearest(out.partition.labels());
        out.fg = Image::from_raw_unchecked(h, w, fg);
        out.bg = Image::from_raw_unchecked(h, w, bg);
        out.alpha_gt = AlphaMatte::from_clamped(h, w, alpha);
        let labels = labels
            .into_iter()
            .zip(out.alpha_gt.data())
            .map(|(l, &a)| match l {
                Region::Foreground if a < 1.0 => Region::Transition,
                Region::Background if a > 0.0 => Region::Transition,
                other => other,
            })
            .collect();
        out.partition = RegionPartition::new(h, w, labels)?;
        out.image = composite(&out.fg, &out.bg, &out.alpha_gt)?;
    }
    if (params.out_height, params.out_width) != (h, w) {
        let (t, l, oh, ow) = (params.crop_top, params.crop_left, params.out_height, params.out_width);
        out.image = out.image.crop(t, l, oh, ow);
        out.fg = out.fg.crop(t, l, oh, ow);
        out.bg = out.bg.crop(t, l, oh, ow);
        out.alpha_gt = out.alpha_gt.crop(t, l, oh, ow);
        out.partition = out.partition.crop(t, l, oh, ow);
    }
    if params.flip {
        out = flip_horizontal(&out);
    }
    Ok(out)
}

fn flip_rows<T: Copy>(data: &[T], width: usize, channels: usize) -> Vec<T> {
    let row_len = width * channels;
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(row_len) {
        for px in row.chunks_exact(channels).rev() {
            out.extend_from_slice(px);
        }
    }
    out
}

pub(crate) fn flip_horizontal(sample: &MattingSample) -> MattingSample {
    let (h, w) = sample.shape();
    MattingSample {
        image: Image::from_raw_unchecked(h, w, flip_rows(sample.image.data(), w, 3)),
        fg: Image::from_raw_unchecked(h, w, flip_rows(sample.fg.data(), w, 3)),
        bg: Image::from_raw_unchecked(h, w, flip_rows(sample.bg.data(), w, 3)),
        alpha_gt: AlphaMatte::from_raw_unchecked(h, w, flip_rows(sample.alpha_gt.data(), w, 1)),
        partition: RegionPartition::new(h, w, flip_rows(sample.partition.labels(), w, 1))
            .expect("flip preserves partition size"),
    }
}

/// Inverse mapping from output pixels to source coordinates.
struct Warp {
    height: usize,
    width: usize,
    cos: f32,
    sin: f32,
    inv_scale: f32,
}

impl Warp {
    fn new(height: usize, width: usize, rotation_deg: f32, scale: f32) -> Self {
        let theta = rotation_deg.to_radians();
        Self {
            height,
            width,
            cos: theta.cos(),
            sin: theta.sin(),
            inv_scale: 1.0 / scale,
        }
    }

    fn source(&self, row: usize, col: usize) -> (f32, f32) {
        let cy = (self.height as f32 - 1.0) / 2.0;
        let cx = (self.width as f32 - 1.0) / 2.0;
        let (dy, dx) = (row as f32 - cy, col as f32 - cx);
        let sy = (self.cos * dy - self.sin * dx) * self.inv_scale + cy;
        let sx = (self.sin * dy + self.cos * dx) * self.inv_scale + cx;
        (
            sy.clamp(0.0, self.height as f32 - 1.0),
            sx.clamp(0.0, self.width as f32 - 1.0),
        )
    }

    fn bilinear(&self, data: &[f32], channels: usize) -> Vec<f32> {
        let (h, w) = (self.height, self.width);
        let mut out = Vec::with_capacity(data.len());
        for row in 0..h {
            for col in 0..w {
                let (sy, sx) = self.source(row, col);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = (sy - y0 as f32, sx - x0 as f32);
                for ch in 0..channels {
                    let at = |y: usize, x: usize| data[(y * w + x) * channels + ch];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
                }
            }
        }
        out
    }

    fn nearest<T: Copy>(&self, data: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(data.len());
        for row in 0..self.height {
            for col in 0..self.width {
                let (sy, sx) = self.source(row, col);
                out.push(data[sy.round() as usize * self.width + sx.round() as usize]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::{generate_background, generate_synthetic_foreground, ForegroundMode, PartitionRadii};

    fn sample(seed: u64) -> MattingSample {
        let fg = generate_synthetic_foreground(seed, 48, 40, ForegroundMode::Single);
        let bg = generate_background(seed + 1, 48, 40);
        MattingSample::new(fg.fg, bg, fg.alpha, PartitionRadii::default()).unwrap()
    }

    #[test]
    fn identity_transform_is_exact() {
        let s = sample(3);
        let out = apply_augment(&s, &AugmentParams::identity(48, 40)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn double_flip_is_identity() {
        let s = sample(4);
        assert_eq!(flip_horizontal(&flip_horizontal(&s)), s);
    }

    #[test]
    fn flip_commutes_with_composite() {
        let s = sample(5);
        let flipped = flip_horizontal(&s);
        let recomposed = composite(&flipped.fg, &flipped.bg, &flipped.alpha_gt).unwrap();
        let max_diff = recomposed
            .data()
            .iter()
            .zip(flipped.image.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff <= 1.0 / 255.0);
    }

    #[test]
    fn random_augment_keeps_sample_invariants() {
        let s = sample(6);
        let cfg = AugmentConfig {
            crop: Some((32, 32)),
            ..Default::default()
        };
        for seed in 0..10 {
            let out = augment(&s, &cfg, seed).unwrap();
            assert_eq!(out.shape(), (32, 32));
            assert!(out.composite_residual() <= 1.0 / 255.0);
            for (&a, &l) in out.alpha_gt.data().iter().zip(out.partition.labels()) {
                if a > 0.0 && a < 1.0 {
                    assert_eq!(l, Region::Transition);
                }
            }
        }
    }

    #[test]
    fn oversized_crop_is_rejected() {
        let cfg = AugmentConfig {
            crop: Some((64, 64)),
            ..Default::default()
        };
        assert!(matches!(augment(&sample(1), &cfg, 0), Err(Error::CropTooLarge { .. })));
    }
}
