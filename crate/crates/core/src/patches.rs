//! Greedy selection of disjoint square windows with the largest summed score.
//!
//! Scores are summed in 128-bit fixed point so that equal fields produce
//! exactly equal window sums and ties resolve by `(top, left)` alone.

use serde::{Deserialize, Serialize};

use crate::domain::{ensure_same_shape, AlphaMatte, UncertaintyMap};
use crate::error::{Error, Result};

pub const DEFAULT_PATCH_SIZE: usize = 64;

/// Fields up to this many pixels are searched over every window position.
const EXHAUSTIVE_LIMIT: usize = 512 * 512;
const FIXED_ONE: f64 = (1u64 << 40) as f64;
/// Per-pixel cap keeping integral sums of large images inside `i128`.
const MAX_PIXEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub top: usize,
    pub left: usize,
    pub k: usize,
    pub score: f64,
}

impl PatchSpec {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.top + self.k).contains(&row) && (self.left..self.left + self.k).contains(&col)
    }

    pub fn overlaps(&self, other: &PatchSpec) -> bool {
        self.top < other.top + other.k
            && other.top < self.top + self.k
            && self.left < other.left + other.k
            && other.left < self.left + self.k
    }
}

/// Checks bounds and pairwise disjointness.
pub fn validate_patches(patches: &[PatchSpec], height: usize, width: usize) -> Result<()> {
    for p in patches {
        if p.k == 0 || p.top + p.k > height || p.left + p.k > width {
            return Err(Error::PatchTooLarge { k: p.k, height, width });
        }
    }
    for i in 0..patches.len() {
        for j in i + 1..patches.len() {
            if patches[i].overlaps(&patches[j]) {
                return Err(Error::OverlappingPatches(i, j));
            }
        }
    }
    Ok(())
}

fn quantize(v: f64) -> i128 {
    (v.clamp(0.0, MAX_PIXEL) * FIXED_ONE).round() as i128
}

struct Integral {
    width: usize,
    sums: Vec<i128>,
}

impl Integral {
    fn new(field: &[i128], height: usize, width: usize) -> Self {
        let stride = width + 1;
        let mut sums = vec![0i128; (height + 1) * stride];
        for r in 0..height {
            let mut row = 0i128;
            for c in 0..width {
                row += field[r * width + c];
                sums[(r + 1) * stride + c + 1] = sums[r * stride + c + 1] + row;
            }
        }
        Self { width, sums }
    }

    fn window(&self, top: usize, left: usize, k: usize) -> i128 {
        let s = self.width + 1;
        self.sums[(top + k) * s + left + k] - self.sums[top * s + left + k] - self.sums[(top + k) * s + left]
            + self.sums[top * s + left]
    }
}

fn grid_positions(extent: usize, k: usize) -> Vec<usize> {
    let stride = (k / 2).max(1);
    let last = extent - k;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Selects up to `count` disjoint `k x k` windows of `field` by descending sum.
pub fn select_windows(field: &[f64], height: usize, width: usize, k: usize, count: usize) -> Result<Vec<PatchSpec>> {
    if field.len() != height * width {
        return Err(Error::ShapeMismatch {
            expected: (height, width),
            actual: (1, field.len()),
        });
    }
    if k == 0 || k > height || k > width {
        return Err(Error::PatchTooLarge { k, height, width });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let q: Vec<i128> = field.iter().map(|&v| quantize(v)).collect();
    let integral = Integral::new(&q, height, width);

    let positions: Vec<(usize, usize)> = if height * width <= EXHAUSTIVE_LIMIT {
        (0..=height - k).flat_map(|t| (0..=width - k).map(move |l| (t, l))).collect()
    } else {
        let rows = grid_positions(height, k);
        let cols = grid_positions(width, k);
        let mut grid: Vec<(usize, usize)> = rows.iter().flat_map(|&t| cols.iter().map(move |&l| (t, l))).collect();
        // window centred on the highest-scoring pixel, clamped inside the image
        let peak = (0..q.len()).fold(0, |best, i| if q[i] > q[best] { i } else { best });
        let (pr, pc) = (peak / width, peak % width);
        let centred = (
            pr.saturating_sub(k / 2).min(height - k),
            pc.saturating_sub(k / 2).min(width - k),
        );
        if !grid.contains(&centred) {
            grid.push(centred);
        }
        grid
    };

    let scores: Vec<i128> = positions.iter().map(|&(t, l)| integral.window(t, l, k)).collect();
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(positions[a].cmp(&positions[b])));

    let mut chosen: Vec<PatchSpec> = Vec::with_capacity(count);
    for idx in order {
        let (top, left) = positions[idx];
        let candidate = PatchSpec {
            top,
            left,
            k,
            score: scores[idx] as f64 / FIXED_ONE,
        };
        if chosen.iter().all(|p| !p.overlaps(&candidate)) {
            chosen.push(candidate);
            if chosen.len() == count {
                break;
            }
        }
    }
    Ok(chosen)
}

/// The `count` least confident disjoint windows according to `sigma`.
pub fn select_patches(sigma: &UncertaintyMap, k: usize, count: usize) -> Result<Vec<PatchSpec>> {
    let (h, w) = sigma.shape();
    let field: Vec<f64> = sigma.data().iter().map(|&s| s as f64).collect();
    select_windows(&field, h, w, k, count)
}

/// The `count` disjoint windows with the largest absolute prediction error.
pub fn mine_training_patches(
    alpha_p: &AlphaMatte,
    alpha_g: &AlphaMatte,
    k: usize,
    count: usize,
) -> Result<Vec<PatchSpec>> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    let (h, w) = alpha_p.shape();
    let field: Vec<f64> = alpha_p
        .data()
        .iter()
        .zip(alpha_g.data())
        .map(|(&p, &g)| (p as f64 - g as f64).abs())
        .collect();
    select_windows(&field, h, w, k, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_window(field: &[f64], w: usize, top: usize, left: usize, k: usize) -> f64 {
        let mut s = 0.0;
        for r in top..top + k {
            for c in left..left + k {
                s += field[r * w + c];
            }
        }
        s
    }

    #[test]
    fn zero_budget_is_empty() {
        let sigma = UncertaintyMap::filled(32, 32, 0.5);
        assert!(select_patches(&sigma, 16, 0).unwrap().is_empty());
    }

    #[test]
    fn impulse_is_covered_by_best_window() {
        let (h, w) = (256, 256);
        let mut data = vec![crate::SIGMA_FLOOR; h * w];
        data[100 * w + 100] = 5.0;
        let sigma = UncertaintyMap::new(h, w, data).unwrap();
        let patches = select_patches(&sigma, 64, 1).unwrap();
        assert_eq!(patches.len(), 1);
        assert!(patches[0].contains(100, 100));
        let field: Vec<f64> = sigma.data().iter().map(|&v| v as f64).collect();
        let mut best = f64::MIN;
        for t in 0..=h - 64 {
            for l in 0..=w - 64 {
                best = best.max(brute_window(&field, w, t, l, 64));
            }
        }
        assert!((patches[0].score - best).abs() < 1e-6);
    }

    #[test]
    fn uniform_field_yields_quadrants_in_raster_order() {
        let sigma = UncertaintyMap::filled(128, 128, 0.3);
        let patches = select_patches(&sigma, 64, 4).unwrap();
        let corners: Vec<(usize, usize)> = patches.iter().map(|p| (p.top, p.left)).collect();
        assert_eq!(corners, vec![(0, 0), (0, 64), (64, 0), (64, 64)]);
    }

    #[test]
    fn oversized_patch_is_rejected() {
        let sigma = UncertaintyMap::filled(32, 48, 1.0);
        assert!(matches!(select_patches(&sigma, 40, 1), Err(Error::PatchTooLarge { .. })));
    }

    #[test]
    fn fewer_patches_when_space_runs_out() {
        let sigma = UncertaintyMap::filled(100, 100, 1.0);
        assert_eq!(select_patches(&sigma, 64, 4).unwrap().len(), 1);
    }

    #[test]
    fn identical_mattes_mine_raster_windows() {
        let a = AlphaMatte::filled(64, 64, 0.4);
        let patches = mine_training_patches(&a, &a, 32, 4).unwrap();
        let corners: Vec<(usize, usize)> = patches.iter().map(|p| (p.top, p.left)).collect();
        assert_eq!(corners, vec![(0, 0), (0, 32), (32, 0), (32, 32)]);
        assert!(patches.iter().all(|p| p.score == 0.0));
    }

    #[test]
    fn mislabeled_block_is_mined_first() {
        let (h, w) = (96, 96);
        let g = AlphaMatte::filled(h, w, 0.0);
        let data: Vec<f32> = (0..h * w)
            .map(|i| if (40..48).contains(&(i / w)) && (20..28).contains(&(i % w)) { 1.0 } else { 0.0 })
            .collect();
        let p = AlphaMatte::new(h, w, data).unwrap();
        let first = mine_training_patches(&p, &g, 32, 3).unwrap()[0];
        for r in 40..48 {
            for c in 20..28 {
                assert!(first.contains(r, c));
            }
        }
    }

    #[test]
    fn single_window_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, w, k) = (64, 64, 16);
        for _ in 0..5 {
            let p = AlphaMatte::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap();
            let g = AlphaMatte::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap();
            let field: Vec<f64> = p.data().iter().zip(g.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).collect();
            let mut best = f64::MIN;
            for t in 0..=h - k {
                for l in 0..=w - k {
                    best = best.max(brute_window(&field, w, t, l, k));
                }
            }
            let mined = mine_training_patches(&p, &g, k, 1).unwrap();
            assert!((mined[0].score - best).abs() < 1e-6);
        }
    }

    #[test]
    fn large_fields_include_the_peak_window() {
        let (h, w) = (600, 520);
        let mut data = vec![0.0; h * w];
        data[333 * w + 77] = 1.0;
        let patches = select_windows(&data, h, w, 64, 2).unwrap();
        assert!(patches[0].contains(333, 77));
    }

    #[test]
    fn validation_rejects_overlap_and_bounds() {
        let a = PatchSpec { top: 0, left: 0, k: 8, score: 0.0 };
        let b = PatchSpec { top: 4, left: 4, k: 8, score: 0.0 };
        let c = PatchSpec { top: 8, left: 0, k: 8, score: 0.0 };
        assert!(matches!(validate_patches(&[a, b], 16, 16), Err(Error::OverlappingPatches(0, 1))));
        assert!(validate_patches(&[a, c], 16, 16).is_ok());
        assert!(validate_patches(&[c], 12, 16).is_err());
    }

    #[test]
    fn patch_json_shape() {
        let p = PatchSpec { top: 1, left: 2, k: 64, score: 0.5 };
        let json = serde_json::to_value(p).unwrap();
        assert_eq!(json, serde_json::json!({"top": 1, "left": 2, "k": 64, "score": 0.5}));
    }

    proptest! {
        #[test]
        fn selections_are_disjoint_in_bounds_and_descending(
            seed in 0u64..200,
            k in 4usize..12,
            count in 0usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (30, 26);
            let field: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
            let patches = select_windows(&field, h, w, k, count).unwrap();
            prop_assert!(patches.len() <= count);
            prop_assert!(validate_patches(&patches, h, w).is_ok());
            for pair in patches.windows(2) {
                prop_assert!(pair[1].score <= pair[0].score);
            }
        }
    }
}
