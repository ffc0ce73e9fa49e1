use super::{join, Layer, Module, Param};
use crate::tensor::Tensor;

const MOMENTUM: f32 = 0.1;
const EPS: f32 = 1e-5;

/// Per-channel batch normalization with running statistics for evaluation.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<(Tensor, Vec<f32>)>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self::with_gamma(channels, 1.0)
    }

    /// Scale initialised to `gamma` (zero makes a residual branch start silent).
    pub fn with_gamma(channels: usize, gamma: f32) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![channels], vec![gamma; channels]),
            beta: Param::new(vec![channels], vec![0.0; channels]),
            running_mean: Param::buffer(vec![channels], vec![0.0; channels]),
            running_var: Param::buffer(vec![channels], vec![1.0; channels]),
            cache: None,
        }
    }

    fn apply(&self, x: &Tensor, mean: &[f32], inv_std: &[f32]) -> Tensor {
        let mut out = x.clone();
        let hw = x.h * x.w;
        for (p, chunk) in out.data.chunks_exact_mut(hw).enumerate() {
            let c = p % self.channels;
            let scale = self.gamma.value[c] * inv_std[c];
            let shift = self.beta.value[c] - mean[c] * scale;
            for v in chunk {
                *v = *v * scale + shift;
            }
        }
        out
    }
}

impl Module for BatchNorm2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

impl Layer for BatchNorm2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let inv_std: Vec<f32> = self.running_var.value.iter().map(|v| 1.0 / (v + EPS).sqrt()).collect();
        self.apply(x, &self.running_mean.value, &inv_std)
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.channels, "batch norm channels");
        let hw = x.h * x.w;
        let count = (x.n * hw) as f64;
        let mut mean = vec![0.0f32; self.channels];
        let mut var = vec![0.0f32; self.channels];
        for c in 0..self.channels {
            let planes = || (0..x.n).flat_map(move |i| x.plane(i, c).iter());
            let m = planes().map(|&v| v as f64).sum::<f64>() / count;
            let v = planes().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / count;
            mean[c] = m as f32;
            var[c] = v as f32;
        }
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + EPS).sqrt()).collect();
        let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 } as f32;
        for c in 0..self.channels {
            let rm = &mut self.running_mean.value[c];
            *rm = (1.0 - MOMENTUM) * *rm + MOMENTUM * mean[c];
            let rv = &mut self.running_var.value[c];
            *rv = (1.0 - MOMENTUM) * *rv + MOMENTUM * var[c] * unbiased;
        }
        let mut x_hat = x.clone();
        for (p, chunk) in x_hat.data.chunks_exact_mut(hw).enumerate() {
            let c = p % self.channels;
            for v in chunk {
                *v = (*v - mean[c]) * inv_std[c];
            }
        }
        let mut out = x_hat.clone();
        for (p, chunk) in out.data.chunks_exact_mut(hw).enumerate() {
            let c = p % self.channels;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            for v in chunk {
                *v = *v * g + b;
            }
        }
        self.cache = Some((x_hat, inv_std));
        out
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (x_hat, inv_std) = self.cache.take().expect("batch norm backward without forward_train");
        let hw = dy.h * dy.w;
        let count = (dy.n * hw) as f32;
        let mut sum_dy = vec![0.0f64; self.channels];
        let mut sum_dy_xhat = vec![0.0f64; self.channels];
        for (p, (d, xh)) in dy.data.chunks_exact(hw).zip(x_hat.data.chunks_exact(hw)).enumerate() {
            let c = p % self.channels;
            for (&a, &b) in d.iter().zip(xh) {
                sum_dy[c] += a as f64;
                sum_dy_xhat[c] += (a * b) as f64;
            }
        }
        for c in 0..self.channels {
            self.gamma.grad[c] += sum_dy_xhat[c] as f32;
            self.beta.grad[c] += sum_dy[c] as f32;
        }
        let mut dx = dy.clone();
        for (p, (d, xh)) in dx.data.chunks_exact_mut(hw).zip(x_hat.data.chunks_exact(hw)).enumerate() {
            let c = p % self.channels;
            let k = self.gamma.value[c] * inv_std[c] / count;
            let (sd, sdx) = (sum_dy[c] as f32, sum_dy_xhat[c] as f32);
            for (v, &xv) in d.iter_mut().zip(xh) {
                *v = k * (count * *v - sd - xv * sdx);
            }
        }
        dx
    }

    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize) {
        ((2 * self.channels * h * w) as u64, h, w)
    }
}
