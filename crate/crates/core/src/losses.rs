//! Training objectives, each returning its value together with the analytic
//! gradient with respect to the prediction.
//!
//! The kernels work on flat row-major slices of any float type so the training
//! loop can feed network outputs directly; typed wrappers accept domain values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ensure_same_shape, AlphaMatte, Region, RegionPartition, UncertaintyMap};
use crate::error::{Error, Result};

/// Loss value and its gradient with respect to the predicted alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct Graded {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: (1, a),
            actual: (1, b),
        });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over TRANSITION plus mean squared error over FOREGROUND and BACKGROUND.
pub fn reg_terms<T: Copy + Into<f64>>(pred: &[T], gt: &[T], labels: &[Region]) -> Result<Graded> {
    check_len(pred.len(), gt.len())?;
    check_len(pred.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyRegion("partition"));
    }
    let n_t = labels.iter().filter(|&&l| l == Region::Transition).count();
    let n_s = labels.len() - n_t;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, ((&p, &g), &label)) in pred.iter().zip(gt).zip(labels).enumerate() {
        let e = p.into() - g.into();
        if label == Region::Transition {
            l1 += e.abs();
            grad[i] = sign(e) / n_t as f64;
        } else {
            l2 += e * e;
            grad[i] = 2.0 * e / n_s as f64;
        }
    }
    let mut value = 0.0;
    if n_t > 0 {
        value += l1 / n_t as f64;
    }
    if n_s > 0 {
        value += l2 / n_s as f64;
    }
    Ok(Graded { value, grad })
}

fn neighbours(i: usize, height: usize, width: usize) -> [usize; 4] {
    let (r, c) = (i / width, i % width);
    let left = r * width + c.saturating_sub(1);
    let right = r * width + (c + 1).min(width - 1);
    let up = c + r.saturating_sub(1) * width;
    let down = c + (r + 1).min(height - 1) * width;
    [left, right, up, down]
}

/// Central-difference gradient magnitude with replicate borders.
pub fn gradient_magnitude<T: Copy + Into<f64>>(a: &[T], height: usize, width: usize) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let [l, r, u, d] = neighbours(i, height, width);
            let gx = (a[r].into() - a[l].into()) / 2.0;
            let gy = (a[d].into() - a[u].into()) / 2.0;
            gx.hypot(gy)
        })
        .collect()
}

/// Mean over all pixels of the absolute difference of gradient magnitudes.
pub fn grad_terms<T: Copy + Into<f64>>(pred: &[T], gt: &[T], height: usize, width: usize) -> Result<Graded> {
    check_len(pred.len(), gt.len())?;
    check_len(pred.len(), height * width)?;
    let n = pred.len();
    if n == 0 {
        return Ok(Graded { value: 0.0, grad: vec![] });
    }
    let norm_g = gradient_magnitude(gt, height, width);
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let [l, r, u, d] = neighbours(i, height, width);
        let gx = (pred[r].into() - pred[l].into()) / 2.0;
        let gy = (pred[d].into() - pred[u].into()) / 2.0;
        let norm_p = gx.hypot(gy);
        let diff = norm_p - norm_g[i];
        value += diff.abs();
        if norm_p > 0.0 {
            let outer = sign(diff) / n as f64 / norm_p;
            let (dx, dy) = (outer * gx / 2.0, outer * gy / 2.0);
            grad[r] += dx;
            grad[l] -= dx;
            grad[d] += dy;
            grad[u] -= dy;
        }
    }
    Ok(Graded {
        value: value / n as f64,
        grad,
    })
}

/// Laplace negative log-likelihood without the `log 2` constant, averaged over pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceTerms {
    pub value: f64,
    pub grad_alpha: Vec<f64>,
    pub grad_sigma: Vec<f64>,
}

pub fn laplace_terms<T: Copy + Into<f64>>(pred: &[T], sigma: &[T], gt: &[T]) -> Result<LaplaceTerms> {
    check_len(pred.len(), gt.len())?;
    check_len(pred.len(), sigma.len())?;
    let n = pred.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad_alpha = Vec::with_capacity(pred.len());
    let mut grad_sigma = Vec::with_capacity(pred.len());
    for ((&p, &s), &g) in pred.iter().zip(sigma).zip(gt) {
        let s: f64 = s.into();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Invalid(format!("sigma must be positive and finite, got {s}")));
        }
        let e = p.into() - g.into();
        let rho = e.abs();
        value += s.ln() + rho / s;
        grad_alpha.push(sign(e) / s / n);
        grad_sigma.push((1.0 / s - rho / (s * s)) / n);
    }
    Ok(LaplaceTerms {
        value: value / n,
        grad_alpha,
        grad_sigma,
    })
}

/// Size of the hard set for a patch of `n` pixels: `ceil(n / 5)`.
pub fn hard_set_size(n: usize) -> usize {
    n.div_ceil(5)
}

/// Indices of the hard set: the largest absolute errors, earlier pixels first on ties.
pub fn hard_set<T: Copy + Into<f64>>(pred: &[T], gt: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    let err = |i: usize| (pred[i].into() - gt[i].into()).abs();
    order.sort_by(|&a, &b| err(b).total_cmp(&err(a)));
    order.truncate(hard_set_size(pred.len()));
    order
}

/// Mean absolute error over the patch plus `lambda` times the mean over its hard set.
pub fn refine_terms<T: Copy + Into<f64>>(pred: &[T], gt: &[T], lambda: f64) -> Result<Graded> {
    check_len(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyRegion("patch"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let n = pred.len() as f64;
    let errors: Vec<f64> = pred.iter().zip(gt).map(|(&p, &g)| p.into() - g.into()).collect();
    let mut value = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mut grad: Vec<f64> = errors.iter().map(|&e| sign(e) / n).collect();
    let hard = hard_set(pred, gt);
    let m = hard.len() as f64;
    value += lambda * hard.iter().map(|&i| errors[i].abs()).sum::<f64>() / m;
    for &i in &hard {
        grad[i] += lambda * sign(errors[i]) / m;
    }
    Ok(Graded { value, grad })
}

/// Per-step record of the matting objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// Unweighted component values.
    pub components: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    pub pixel_counts: BTreeMap<String, usize>,
}

impl LossReport {
    /// Weighted sum of the components, for checking `total`.
    pub fn recomputed_total(&self) -> f64 {
        self.components
            .iter()
            .map(|(name, v)| v * self.weights.get(name).copied().unwrap_or(1.0))
            .sum()
    }

    /// Averages reports of equal structure (e.g. over a batch).
    pub fn mean(reports: &[LossReport]) -> Option<LossReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let mut out = first.clone();
        out.total = reports.iter().map(|r| r.total).sum::<f64>() / n;
        for (name, v) in out.components.iter_mut() {
            *v = reports.iter().map(|r| r.components[name]).sum::<f64>() / n;
        }
        for (name, c) in out.pixel_counts.iter_mut() {
            *c = reports.iter().map(|r| r.pixel_counts[name]).sum();
        }
        Some(out)
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.components.values().all(|v| v.is_finite())
    }
}

fn pixel_counts(labels: &[Region]) -> BTreeMap<String, usize> {
    let count = |r: Region| labels.iter().filter(|&&l| l == r).count();
    BTreeMap::from([
        ("foreground".to_string(), count(Region::Foreground)),
        ("background".to_string(), count(Region::Background)),
        ("transition".to_string(), count(Region::Transition)),
    ])
}

/// `reg + grad_weight * grad` together with its gradient.
pub fn alpha_terms<T: Copy + Into<f64>>(
    pred: &[T],
    gt: &[T],
    labels: &[Region],
    height: usize,
    width: usize,
    grad_weight: f64,
) -> Result<(LossReport, Vec<f64>)> {
    let reg = reg_terms(pred, gt, labels)?;
    let grad = grad_terms(pred, gt, height, width)?;
    let total = reg.value + grad_weight * grad.value;
    let gradient = reg.grad.iter().zip(&grad.grad).map(|(a, b)| a + grad_weight * b).collect();
    let report = LossReport {
        total,
        components: BTreeMap::from([("reg".to_string(), reg.value), ("grad".to_string(), grad.value)]),
        weights: BTreeMap::from([("reg".to_string(), 1.0), ("grad".to_string(), grad_weight)]),
        pixel_counts: pixel_counts(labels),
    };
    Ok((report, gradient))
}

pub fn reg_loss(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, partition: &RegionPartition) -> Result<f64> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    ensure_same_shape(alpha_p.shape(), partition.shape())?;
    Ok(reg_terms(alpha_p.data(), alpha_g.data(), partition.labels())?.value)
}

pub fn grad_loss(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte) -> Result<f64> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    let (h, w) = alpha_p.shape();
    Ok(grad_terms(alpha_p.data(), alpha_g.data(), h, w)?.value)
}

pub fn laplace_nll(alpha_p: &AlphaMatte, sigma_p: &UncertaintyMap, alpha_g: &AlphaMatte) -> Result<f64> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    ensure_same_shape(alpha_p.shape(), sigma_p.shape())?;
    Ok(laplace_terms(alpha_p.data(), sigma_p.data(), alpha_g.data())?.value)
}

pub fn refine_loss(alpha_p_patch: &AlphaMatte, alpha_g_patch: &AlphaMatte, lambda: f64) -> Result<f64> {
    ensure_same_shape(alpha_p_patch.shape(), alpha_g_patch.shape())?;
    Ok(refine_terms(alpha_p_patch.data(), alpha_g_patch.data(), lambda)?.value)
}

pub fn alpha_loss(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, partition: &RegionPartition) -> Result<LossReport> {
    alpha_loss_weighted(alpha_p, alpha_g, partition, 1.0)
}

pub fn alpha_loss_weighted(
    alpha_p: &AlphaMatte,
    alpha_g: &AlphaMatte,
    partition: &RegionPartition,
    grad_weight: f64,
) -> Result<LossReport> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    ensure_same_shape(alpha_p.shape(), partition.shape())?;
    let (h, w) = alpha_p.shape();
    Ok(alpha_terms(alpha_p.data(), alpha_g.data(), partition.labels(), h, w, grad_weight)?.0)
}
