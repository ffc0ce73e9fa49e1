//! Brute-force reference implementations, written without the library's helpers.

use std::collections::VecDeque;

pub fn sad(p: &[f32], g: &[f32], mask: &[bool]) -> f64 {
    (0..p.len()).filter(|&i| mask[i]).map(|i| (p[i] as f64 - g[i] as f64).abs()).sum()
}

pub fn mse(p: &[f32], g: &[f32], mask: &[bool]) -> f64 {
    let n = mask.iter().filter(|&&m| m).count() as f64;
    (0..p.len()).filter(|&i| mask[i]).map(|i| (p[i] as f64 - g[i] as f64).powi(2)).sum::<f64>() / n
}

fn density(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Dense derivative-of-Gaussian kernels `(d/dx, d/dy)`, truncated where the
/// density first drops to 0.01 and scaled to unit Frobenius norm.
fn dense_kernels(sigma: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, i64) {
    let mut hs = 0i64;
    while density(hs as f64, sigma) > 0.01 {
        hs += 1;
    }
    let n = (2 * hs + 1) as usize;
    let mut kx = vec![vec![0.0; n]; n];
    for (i, row) in kx.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let (u, v) = (i as f64 - hs as f64, j as f64 - hs as f64);
            *cell = density(u, sigma) * (-v / (sigma * sigma)) * density(v, sigma);
        }
    }
    let norm = kx.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for v in kx.iter_mut().flatten() {
        *v /= norm;
    }
    let ky: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kx[j][i]).collect()).collect();
    (kx, ky, hs)
}

fn convolve(a: &[f64], h: usize, w: usize, kernel: &[Vec<f64>], hs: i64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut acc = 0.0;
            for (i, row) in kernel.iter().enumerate() {
                for (j, &k) in row.iter().enumerate() {
                    let rr = (r - (i as i64 - hs)).clamp(0, h as i64 - 1);
                    let cc = (c - (j as i64 - hs)).clamp(0, w as i64 - 1);
                    acc += k * a[(rr * w as i64 + cc) as usize];
                }
            }
            out[(r * w as i64 + c) as usize] = acc;
        }
    }
    out
}

pub fn grad(p: &[f32], g: &[f32], h: usize, w: usize, mask: &[bool]) -> f64 {
    let (kx, ky, hs) = dense_kernels(1.4);
    let to64 = |a: &[f32]| a.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let (p, g) = (to64(p), to64(g));
    let (px, py) = (convolve(&p, h, w, &kx, hs), convolve(&p, h, w, &ky, hs));
    let (gx, gy) = (convolve(&g, h, w, &kx, hs), convolve(&g, h, w, &ky, hs));
    (0..h * w)
        .filter(|&i| mask[i])
        .map(|i| (px[i] - gx[i]).powi(2) + (py[i] - gy[i]).powi(2))
        .sum()
}

/// Largest 4-connected component by flood fill; the first one found wins ties.
fn largest_component(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut seen = vec![false; h * w];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let mut out = vec![false; h * w];
    for i in best {
        out[i] = true;
    }
    out
}

pub fn conn(p: &[f32], g: &[f32], h: usize, w: usize, mask: &[bool], step: f64) -> f64 {
    let steps = (1.0 / step).round() as usize;
    let components: Vec<Vec<bool>> = (1..=steps)
        .map(|k| {
            let t = k as f64 * step;
            let both: Vec<bool> = (0..h * w).map(|i| p[i] as f64 >= t && g[i] as f64 >= t).collect();
            largest_component(&both, h, w)
        })
        .collect();
    let phi = |a: f32, l: f64| {
        let d = a as f64 - l;
        if d >= 0.15 {
            1.0 - d
        } else {
            1.0
        }
    };
    (0..h * w)
        .filter(|&i| mask[i])
        .map(|i| {
            // threshold just before the pixel first leaves the shared region
            let l = (0..steps).find(|&k| !components[k][i]).map_or(1.0, |k| k as f64 * step);
            (phi(p[i], l) - phi(g[i], l)).abs()
        })
        .sum()
}

/// Central finite difference of `f` in coordinate `i` of `x`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += eps;
    minus[i] -= eps;
    (f(&plus) - f(&minus)) / (2.0 * eps)
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}
