//! User clicks as a hint channel, and the click simulator used in training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::domain::{AlphaMatte, ClickPoint, ClickSet, HintMap, Polarity, DEFAULT_CLICK_RADIUS};
use crate::error::{Error, Result};
use crate::morphology::erode;

/// Paints every click as a disk of radius `clicks.radius()`; later clicks overwrite earlier ones.
pub fn render_hint_map(clicks: &ClickSet, height: usize, width: usize) -> Result<HintMap> {
    clicks.check_bounds(height, width)?;
    let mut data = vec![0.0f32; height * width];
    let r = clicks.radius() as i64;
    for click in clicks.clicks() {
        let value = click.polarity.hint_value();
        let (cr, cc) = (click.row as i64, click.col as i64);
        for row in (cr - r).max(0)..=(cr + r).min(height as i64 - 1) {
            let dy = row - cr;
            for col in (cc - r).max(0)..=(cc + r).min(width as i64 - 1) {
                let dx = col - cc;
                if dx * dx + dy * dy <= r * r {
                    data[row as usize * width + col as usize] = value;
                }
            }
        }
    }
    Ok(HintMap::from_raw_unchecked(height, width, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClickSamplerConfig {
    /// Success probability of the geometric click-count distribution on `{0, 1, 2, ...}`.
    pub p: f64,
    pub radius: u32,
    pub fg_alpha_threshold: f32,
    pub bg_alpha_threshold: f32,
    pub seed: u64,
}

impl Default for ClickSamplerConfig {
    fn default() -> Self {
        Self {
            p: 1.0 / 6.0,
            radius: DEFAULT_CLICK_RADIUS,
            fg_alpha_threshold: 1.0,
            bg_alpha_threshold: 0.0,
            seed: 0,
        }
    }
}

impl ClickSamplerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Invalid(format!("geometric p={} must lie in (0, 1)", self.p)));
        }
        if self.radius < 1 {
            return Err(Error::Invalid("click radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws the number of simulated clicks, `P(m = j) = (1 - p)^j p` for `j >= 0`.
pub fn sample_click_count<R: Rng + ?Sized>(p: f64, rng: &mut R) -> usize {
    Geometric::new(p).expect("p validated by caller").sample(rng) as usize
}

/// Pixels eligible for clicks of one polarity: the eroded region, or the raw
/// region when erosion empties it.
struct Eligible {
    pixels: Vec<usize>,
}

impl Eligible {
    fn new(region: Vec<bool>, height: usize, width: usize, radius: u32) -> Self {
        let eroded = erode(&region, height, width, radius as f64);
        let pick = |mask: &[bool]| -> Vec<usize> {
            mask.iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect()
        };
        let mut pixels = pick(&eroded);
        if pixels.is_empty() {
            pixels = pick(&region);
        }
        Self { pixels }
    }
}

/// Simulates a user: `m` clicks, each independently foreground or background
/// with probability 1/2, placed uniformly in the corresponding confident region.
pub fn sample_clicks(alpha_gt: &AlphaMatte, config: &ClickSamplerConfig) -> Result<ClickSet> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (h, w) = alpha_gt.shape();
    let m = sample_click_count(config.p, &mut rng);

    let mut clicks = ClickSet::empty(config.radius);
    if m == 0 {
        return Ok(clicks);
    }
    let fg = Eligible::new(
        alpha_gt.data().iter().map(|&a| a >= config.fg_alpha_threshold).collect(),
        h,
        w,
        config.radius,
    );
    let bg = Eligible::new(
        alpha_gt.data().iter().map(|&a| a <= config.bg_alpha_threshold).collect(),
        h,
        w,
        config.radius,
    );
    for _ in 0..m {
        let polarity = if rng.random_bool(0.5) {
            Polarity::Foreground
        } else {
            Polarity::Background
        };
        let pool = match polarity {
            Polarity::Foreground => &fg.pixels,
            Polarity::Background => &bg.pixels,
        };
        if pool.is_empty() {
            continue;
        }
        let idx = pool[rng.random_range(0..pool.len())];
        clicks.push(idx / w, idx % w, polarity);
    }
    Ok(clicks)
}

/// Places one click at the pixel deepest inside `region` (largest distance to
/// its complement, first in raster order on ties). `None` when the region is empty.
pub fn deepest_point(region: &[bool], height: usize, width: usize) -> Option<(usize, usize)> {
    let complement: Vec<bool> = region.iter().map(|&m| !m).collect();
    let dist = crate::morphology::squared_distance_to(&complement, height, width);
    let mut best: Option<(usize, f64)> = None;
    for (i, (&inside, &d)) in region.iter().zip(&dist).enumerate() {
        if inside && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| (i / width, i % width))
}

/// Convenience for building click sets by hand.
pub fn click(row: usize, col: usize, polarity: Polarity, sequence_index: u32) -> ClickPoint {
    ClickPoint {
        row,
        col,
        polarity,
        sequence_index,
    }
}
