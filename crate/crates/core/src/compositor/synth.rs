//! Procedural stand-ins for a matting foreground library and a background photo set.
//!
//! Foregrounds are star-shaped blobs with a soft ramp edge and hair-like
//! strokes (random walks with a Gaussian alpha profile), painted with a
//! striped, noisy texture. Backgrounds are smooth multi-octave value noise
//! over a colour gradient.

use std::f32::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{AlphaMatte, Image};
use crate::morphology::label_components;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ForegroundMode {
    Single,
    /// Two disjoint objects, for click-ambiguity experiments.
    TwoObjects,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticForeground {
    pub fg: Image,
    /// Union of all objects.
    pub alpha: AlphaMatte,
    /// One matte per object, in generation order.
    pub objects: Vec<AlphaMatte>,
}

struct Blob {
    cy: f32,
    cx: f32,
    radius: f32,
    harmonics: [(f32, f32); 3],
    edge: f32,
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, cy: f32, cx: f32, radius: f32) -> Self {
        let mut harmonics = [(0.0, 0.0); 3];
        for h in &mut harmonics {
            *h = (rng.random_range(0.0..0.12), rng.random_range(0.0..TAU));
        }
        Self {
            cy,
            cx,
            radius,
            harmonics,
            edge: rng.random_range(1.0..3.0),
        }
    }

    fn boundary_radius(&self, theta: f32) -> f32 {
        let wobble: f32 = self
            .harmonics
            .iter()
            .enumerate()
            .map(|(k, &(amp, phase))| amp * ((k as f32 + 2.0) * theta + phase).cos())
            .sum();
        self.radius * (1.0 + wobble)
    }

    fn alpha_at(&self, row: f32, col: f32) -> f32 {
        let (dy, dx) = (row - self.cy, col - self.cx);
        let rho = (dy * dy + dx * dx).sqrt();
        let inside = self.boundary_radius(dy.atan2(dx)) - rho;
        ((inside + self.edge / 2.0) / self.edge).clamp(0.0, 1.0)
    }

    fn extent(&self) -> f32 {
        self.radius * 1.36 + self.edge
    }
}

fn paint_strokes(rng: &mut ChaCha8Rng, blob: &Blob, alpha: &mut [f32], height: usize, width: usize) {
    let count = rng.random_range(6..=14);
    for _ in 0..count {
        let theta = rng.random_range(0.0..TAU);
        let start = blob.boundary_radius(theta) - 1.0;
        let (mut y, mut x) = (blob.cy + start * theta.sin(), blob.cx + start * theta.cos());
        let mut heading = theta + rng.random_range(-0.5..0.5);
        let length = rng.random_range(6..=18);
        let spread = rng.random_range(0.55f32..0.9);
        let peak = rng.random_range(0.55f32..1.0);
        for _ in 0..length {
            heading += rng.random_range(-0.35..0.35);
            y += heading.sin();
            x += heading.cos();
            let (r0, c0) = (y.round() as i64, x.round() as i64);
            for r in (r0 - 3).max(0)..=(r0 + 3).min(height as i64 - 1) {
                for c in (c0 - 3).max(0)..=(c0 + 3).min(width as i64 - 1) {
                    let d2 = (r as f32 - y).powi(2) + (c as f32 - x).powi(2);
                    let v = peak * (-d2 / (2.0 * spread * spread)).exp();
                    if v >= 0.02 {
                        let slot = &mut alpha[r as usize * width + c as usize];
                        *slot = slot.max(v);
                    }
                }
            }
        }
    }
}

/// Caps every `alpha > 0.5` component that does not touch `core` at 0.5, so
/// detached stroke fragments stay fractional.
fn cap_detached(alpha: &mut [f32], core: &[bool], height: usize, width: usize) {
    let strong: Vec<bool> = alpha.iter().map(|&a| a > 0.5).collect();
    let (labels, n) = label_components(&strong, height, width);
    let mut keep = vec![false; n + 1];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 && core[i] {
            keep[l as usize] = true;
        }
    }
    for (a, &l) in alpha.iter_mut().zip(&labels) {
        if l > 0 && !keep[l as usize] {
            *a = a.min(0.5);
        }
    }
}

/// Blob plus strokes, zeroed outside `owned`.
fn render_object(rng: &mut ChaCha8Rng, blob: &Blob, owned: &[bool], height: usize, width: usize) -> Vec<f32> {
    let mut alpha = vec![0.0f32; height * width];
    for r in 0..height {
        for c in 0..width {
            alpha[r * width + c] = blob.alpha_at(r as f32, c as f32);
        }
    }
    paint_strokes(rng, blob, &mut alpha, height, width);
    for (a, &own) in alpha.iter_mut().zip(owned) {
        if !own {
            *a = 0.0;
        }
    }
    let core: Vec<bool> = alpha.iter().map(|&a| a >= 1.0).collect();
    cap_detached(&mut alpha, &core, height, width);
    alpha
}

struct Texture {
    base: [f32; 3],
    stripe: [f32; 3],
    period: f32,
    direction: (f32, f32),
    noise: ValueNoise,
    noise_amp: f32,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let angle = rng.random_range(0.0..TAU);
        Self {
            base: [rng.random(), rng.random(), rng.random()],
            stripe: [
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
            ],
            period: rng.random_range(4.0..10.0),
            direction: (angle.sin(), angle.cos()),
            noise: {
                let cell = rng.random_range(3.0..6.0);
                ValueNoise::random(rng, cell)
            },
            noise_amp: rng.random_range(0.05..0.15),
        }
    }

    fn color(&self, row: f32, col: f32) -> [f32; 3] {
        let phase = (row * self.direction.0 + col * self.direction.1) / self.period * TAU;
        let s = phase.sin();
        let n = self.noise.sample(row, col) - 0.5;
        let mut out = [0.0; 3];
        for ch in 0..3 {
            out[ch] = (self.base[ch] + self.stripe[ch] * s + self.noise_amp * n).clamp(0.0, 1.0);
        }
        out
    }
}

/// Smoothly interpolated random lattice.
struct ValueNoise {
    spacing: f32,
    lattice: Vec<f32>,
    cols: usize,
}

impl ValueNoise {
    const CELLS: usize = 64;

    fn random(rng: &mut ChaCha8Rng, spacing: f32) -> Self {
        let cols = Self::CELLS;
        Self {
            spacing,
            lattice: (0..cols * cols).map(|_| rng.random()).collect(),
            cols,
        }
    }

    fn sample(&self, row: f32, col: f32) -> f32 {
        let (y, x) = (row / self.spacing, col / self.spacing);
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
        let (sy, sx) = (smooth(fy), smooth(fx));
        let at = |yy: f32, xx: f32| {
            let (i, j) = ((yy as usize) % self.cols, (xx as usize) % self.cols);
            self.lattice[i * self.cols + j]
        };
        let top = at(y0, x0) * (1.0 - sx) + at(y0, x0 + 1.0) * sx;
        let bottom = at(y0 + 1.0, x0) * (1.0 - sx) + at(y0 + 1.0, x0 + 1.0) * sx;
        top * (1.0 - sy) + bottom * sy
    }
}

/// Deterministic in `seed`. Every call yields a non-empty transition band.
pub fn generate_synthetic_foreground(
    seed: u64,
    height: usize,
    width: usize,
    mode: ForegroundMode,
) -> SyntheticForeground {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5f0e_a1fa);
    let side = height.min(width) as f32;
    let (hf, wf) = (height as f32, width as f32);

    let blobs = match mode {
        ForegroundMode::Single => {
            let radius = rng.random_range(0.17..0.26) * side;
            let margin = radius * 0.6;
            let cy = rng.random_range(margin..(hf - margin).max(margin + 1.0));
            let cx = rng.random_range(margin..(wf - margin).max(margin + 1.0));
            vec![Blob::random(&mut rng, cy, cx, radius)]
        }
        ForegroundMode::TwoObjects => {
            // Opposite halves along a random axis, far enough apart that strokes cannot bridge.
            let radius = rng.random_range(0.13..0.16) * side;
            let vertical = rng.random_bool(0.5);
            let (along, across) = if vertical { (hf, wf) } else { (wf, hf) };
            let jitter = along * 0.03;
            let a = along * 0.25 + rng.random_range(-jitter..jitter);
            let b = along * 0.75 + rng.random_range(-jitter..jitter);
            let offsets = [
                across * 0.5 + rng.random_range(-0.15..0.15) * across,
                across * 0.5 + rng.random_range(-0.15..0.15) * across,
            ];
            [(a, offsets[0]), (b, offsets[1])]
                .into_iter()
                .map(|(p, q)| {
                    let (cy, cx) = if vertical { (p, q) } else { (q, p) };
                    Blob::random(&mut rng, cy, cx, radius)
                })
                .collect()
        }
    };

    let textures: Vec<Texture> = blobs.iter().map(|_| Texture::random(&mut rng)).collect();
    // Each pixel belongs to the blob it is relatively closest to; other objects
    // are cut there, so strokes never reach into a neighbour.
    let owner: Vec<usize> = (0..height * width)
        .map(|i| {
            let (r, c) = ((i / width) as f32, (i % width) as f32);
            blobs
                .iter()
                .enumerate()
                .map(|(j, b)| (j, ((r - b.cy).powi(2) + (c - b.cx).powi(2)).sqrt() / b.extent()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(0, |(j, _)| j)
        })
        .collect();
    let objects: Vec<Vec<f32>> = blobs
        .iter()
        .enumerate()
        .map(|(j, blob)| {
            let owned: Vec<bool> = owner.iter().map(|&o| o == j).collect();
            render_object(&mut rng, blob, &owned, height, width)
        })
        .collect();

    let mut alpha = vec![0.0f32; height * width];
    for obj in &objects {
        for (a, &o) in alpha.iter_mut().zip(obj) {
            *a = a.max(o);
        }
    }

    let fg = owner
        .iter()
        .enumerate()
        .flat_map(|(i, &j)| textures[j].color((i / width) as f32, (i % width) as f32))
        .collect();

    SyntheticForeground {
        fg: Image::from_raw_unchecked(height, width, fg),
        alpha: AlphaMatte::from_raw_unchecked(height, width, alpha),
        objects: objects
            .into_iter()
            .map(|o| AlphaMatte::from_raw_unchecked(height, width, o))
            .collect(),
    }
}

/// Smooth colour noise over a linear gradient. Deterministic in `seed`.
pub fn generate_background(seed: u64, height: usize, width: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb6c0_0d15);
    let start: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let end: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let angle = rng.random_range(0.0..TAU);
    let (gy, gx) = (angle.sin(), angle.cos());
    let octaves: Vec<(ValueNoise, [f32; 3])> = (0..3)
        .map(|k| {
            let spacing = rng.random_range(14.0..28.0) * (1.5f32).powi(k);
            let amp = 0.35 / (k as f32 + 1.0);
            let noise = ValueNoise::random(&mut rng, spacing);
            let tint = [
                rng.random_range(-amp..amp),
                rng.random_range(-amp..amp),
                rng.random_range(-amp..amp),
            ];
            (noise, tint)
        })
        .collect();
    let norm = (height.max(width) as f32).max(1.0);
    let mut data = Vec::with_capacity(height * width * 3);
    for r in 0..height {
        for c in 0..width {
            let t = (((r as f32 * gy + c as f32 * gx) / norm) * 0.5 + 0.5).clamp(0.0, 1.0);
            for ch in 0..3 {
                let mut v = start[ch] * (1.0 - t) + end[ch] * t;
                for (noise, tint) in &octaves {
                    v += tint[ch] * (noise.sample(r as f32, c as f32) - 0.5) * 2.0;
                }
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Image::from_raw_unchecked(height, width, data)
}
