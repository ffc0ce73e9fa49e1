use crate::domain::AlphaMatte;
use crate::error::Result;

use super::check_inputs;

const SIGMA: f64 = 1.4;
const EPSILON: f64 = 1e-2;

fn gauss(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn dgauss(x: f64, sigma: f64) -> f64 {
    -x * gauss(x, sigma) / (sigma * sigma)
}

/// Kernel half-width at which the Gaussian falls below `EPSILON` of its peak density.
pub(crate) fn half_size(sigma: f64) -> usize {
    (sigma * (-2.0 * ((2.0 * std::f64::consts::PI).sqrt() * sigma * EPSILON).ln()).sqrt()).ceil() as usize
}

/// 1-D factors of the derivative-of-Gaussian filter `h(i, j) = g(i) * g'(j) / norm`.
fn kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let hs = half_size(sigma) as i64;
    let g: Vec<f64> = (-hs..=hs).map(|u| gauss(u as f64, sigma)).collect();
    let dg: Vec<f64> = (-hs..=hs).map(|u| dgauss(u as f64, sigma)).collect();
    let norm = (g.iter().map(|v| v * v).sum::<f64>() * dg.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let dg = dg.into_iter().map(|v| v / norm).collect();
    (g, dg)
}

/// Convolves every row (`along_rows == false`) or column with `kernel`, replicating borders.
fn convolve_1d(data: &[f64], height: usize, width: usize, kernel: &[f64], along_rows: bool) -> Vec<f64> {
    let hs = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &weight) in kernel.iter().enumerate() {
                let offset = k as i64 - hs;
                let (rr, cc) = if along_rows {
                    ((r as i64 - offset).clamp(0, height as i64 - 1) as usize, c)
                } else {
                    (r, (c as i64 - offset).clamp(0, width as i64 - 1) as usize)
                };
                acc += weight * data[rr * width + cc];
            }
            out[r * width + c] = acc;
        }
    }
    out
}

/// Derivative-of-Gaussian image gradients `(d/dx, d/dy)` with replicate borders.
pub fn gaussian_gradient(data: &[f64], height: usize, width: usize, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (g, dg) = kernels(sigma);
    let gx = convolve_1d(&convolve_1d(data, height, width, &dg, false), height, width, &g, true);
    let gy = convolve_1d(&convolve_1d(data, height, width, &dg, true), height, width, &g, false);
    (gx, gy)
}

/// Sum over the mask of the squared norm of the difference of smoothed gradients.
pub fn grad_metric(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
    check_inputs(alpha_p, alpha_g, mask)?;
    let (h, w) = alpha_p.shape();
    let to_f64 = |a: &AlphaMatte| a.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
    let (px, py) = gaussian_gradient(&to_f64(alpha_p), h, w, SIGMA);
    let (gx, gy) = gaussian_gradient(&to_f64(alpha_g), h, w, SIGMA);
    Ok((0..h * w)
        .filter(|&i| mask[i])
        .map(|i| (px[i] - gx[i]).powi(2) + (py[i] - gy[i]).powi(2))
        .sum())
}
