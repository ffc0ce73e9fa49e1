use crate::domain::AlphaMatte;
use crate::error::{Error, Result};
use crate::morphology::label_components;

use super::check_inputs;

/// Mask of the largest 4-connected component (earliest in raster order on ties).
fn largest_component(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let (labels, count) = label_components(mask, height, width);
    if count == 0 {
        return vec![false; mask.len()];
    }
    let mut sizes = vec![0usize; count + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let mut best = 1;
    for l in 2..=count {
        if sizes[l] > sizes[best] {
            best = l;
        }
    }
    labels.iter().map(|&l| l as usize == best).collect()
}

/// Connectivity error: thresholds `step, 2*step, ..., 1` are swept, each pixel
/// records the last threshold at which it still belonged to the largest region
/// shared by both mattes, and the resulting connectivity degrees are compared.
pub fn conn_metric(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, mask: &[bool], step: f64) -> Result<f64> {
    check_inputs(alpha_p, alpha_g, mask)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Invalid(format!("threshold step {step} must lie in (0, 1]")));
    }
    let (h, w) = alpha_p.shape();
    let (p, g) = (alpha_p.data(), alpha_g.data());
    let steps = (1.0 / step).round() as usize;
    let mut level = vec![-1.0f64; h * w];
    for i in 1..=steps {
        let t = i as f64 * step;
        let both: Vec<bool> = p.iter().zip(g).map(|(&a, &b)| a as f64 >= t && b as f64 >= t).collect();
        let omega = largest_component(&both, h, w);
        let previous = (i - 1) as f64 * step;
        for (l, &inside) in level.iter_mut().zip(&omega) {
            if *l == -1.0 && !inside {
                *l = previous;
            }
        }
    }
    let phi = |a: f32, l: f64| {
        let d = a as f64 - l;
        if d >= 0.15 {
            1.0 - d
        } else {
            1.0
        }
    };
    Ok((0..h * w)
        .filter(|&i| mask[i])
        .map(|i| {
            let l = if level[i] == -1.0 { 1.0 } else { level[i] };
            (phi(p[i], l) - phi(g[i], l)).abs()
        })
        .sum())
}
