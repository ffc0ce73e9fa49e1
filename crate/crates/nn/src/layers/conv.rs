use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{join, Layer, Module, Param};
use crate::gemm::gemm;
use crate::tensor::Tensor;

/// Geometry of a square-kernel convolution over one sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds receptive fields into a `(C*k*k) x (oh*ow)` matrix; out-of-image taps are zero.
pub(crate) fn im2col(x: &[f32], g: Window, col: &mut [f32]) {
    let ohw = g.oh * g.ow;
    for ci in 0..g.channels {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut col[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        // valid ox satisfy 0 <= ox + kj - pad < w
                        let lo = g.pad.saturating_sub(kj).min(g.ow);
                        let hi = (g.w + g.pad).saturating_sub(kj).min(g.ow).max(lo);
                        out[..lo].fill(0.0);
                        if lo < hi {
                            let start = lo + kj - g.pad;
                            out[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                        }
                        out[hi..].fill(0.0);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            *o = if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { 0.0 };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters and accumulates columns back into `x`.
pub(crate) fn col2im(col: &[f32], g: Window, x: &mut [f32]) {
    let ohw = g.oh * g.ow;
    for ci in 0..g.channels {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &col[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let cols = &src[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, &v) in cols.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn kaiming(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f32> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    (0..len).map(|_| normal.sample(rng) as f32).collect()
}

fn add_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (chunk, &b) in out.chunks_exact_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

fn accumulate_bias_grad(dy: &Tensor, grad: &mut [f32]) {
    for i in 0..dy.n {
        for (c, g) in grad.iter_mut().enumerate() {
            *g += dy.plane(i, c).iter().sum::<f32>();
        }
    }
}

/// Square-kernel 2-D convolution, weight layout `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param,
    pub bias: Option<Param>,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let len = out_channels * in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(
                vec![out_channels, in_channels, kernel, kernel],
                kaiming(rng, len, in_channels * kernel * kernel),
            ),
            bias: bias.then(|| Param::new(vec![out_channels], vec![0.0; out_channels])),
            input: None,
        }
    }

    /// All weights and bias zero.
    pub fn zeroed(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        let len = out_channels * in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding,
            weight: Param::new(vec![out_channels, in_channels, kernel, kernel], vec![0.0; len]),
            bias: Some(Param::new(vec![out_channels], vec![0.0; out_channels])),
            input: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn window(&self, h: usize, w: usize) -> Window {
        let (oh, ow) = self.output_size(h, w);
        Window {
            channels: self.in_channels,
            h,
            w,
            k: self.kernel,
            stride: self.stride,
            pad: self.padding,
            oh,
            ow,
        }
    }
}

impl Module for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

impl Layer for Conv2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let g = self.window(x.h, x.w);
        let ohw = g.oh * g.ow;
        let mut out = Tensor::zeros(x.n, self.out_channels, g.oh, g.ow);
        let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; g.rows() * ohw] };
        for i in 0..x.n {
            let input = x.sample(i);
            let cols: &[f32] = if g.is_pointwise() {
                input
            } else {
                im2col(input, g, &mut col);
                &col
            };
            let y = out.sample_mut(i);
            gemm(self.out_channels, g.rows(), ohw, &self.weight.value, false, cols, false, 0.0, y);
            if let Some(b) = &self.bias {
                add_bias(y, &b.value, ohw);
            }
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let out = self.forward(x);
        self.input = Some(x.clone());
        out
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("conv backward without forward_train");
        let g = self.window(x.h, x.w);
        let ohw = g.oh * g.ow;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; g.rows() * ohw] };
        let mut dcol = vec![0.0; g.rows() * ohw];
        for i in 0..x.n {
            let input = x.sample(i);
            let cols: &[f32] = if g.is_pointwise() {
                input
            } else {
                im2col(input, g, &mut col);
                &col
            };
            let d = dy.sample(i);
            gemm(self.out_channels, ohw, g.rows(), d, false, cols, true, 1.0, &mut self.weight.grad);
            gemm(g.rows(), self.out_channels, ohw, &self.weight.value, true, d, false, 0.0, &mut dcol);
            if g.is_pointwise() {
                dx.sample_mut(i).copy_from_slice(&dcol);
            } else {
                col2im(&dcol, g, dx.sample_mut(i));
            }
        }
        if let Some(b) = &mut self.bias {
            accumulate_bias_grad(dy, &mut b.grad);
        }
        dx
    }

    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize) {
        let (oh, ow) = self.output_size(h, w);
        let macs = self.out_channels * self.in_channels * self.kernel * self.kernel * oh * ow;
        let bias = if self.bias.is_some() { self.out_channels * oh * ow } else { 0 };
        ((2 * macs + bias) as u64, oh, ow)
    }
}

/// Transposed convolution (fractionally strided), weight layout `[in, out, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let len = in_channels * out_channels * kernel * kernel;
        let fan_in = (in_channels * kernel * kernel / (stride * stride)).max(1);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(vec![in_channels, out_channels, kernel, kernel], kaiming(rng, len, fan_in)),
            input: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.kernel - 2 * self.padding,
            (w - 1) * self.stride + self.kernel - 2 * self.padding,
        )
    }

    /// The equivalent forward-convolution window over the output plane.
    fn window(&self, h: usize, w: usize) -> Window {
        let (oh, ow) = self.output_size(h, w);
        Window {
            channels: self.out_channels,
            h: oh,
            w: ow,
            k: self.kernel,
            stride: self.stride,
            pad: self.padding,
            oh: h,
            ow: w,
        }
    }
}

impl Module for ConvTranspose2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_channels, "transposed conv input channels");
        let g = self.window(x.h, x.w);
        let ihw = x.h * x.w;
        let mut out = Tensor::zeros(x.n, self.out_channels, g.h, g.w);
        let mut col = vec![0.0; g.rows() * ihw];
        for i in 0..x.n {
            gemm(g.rows(), self.in_channels, ihw, &self.weight.value, true, x.sample(i), false, 0.0, &mut col);
            col2im(&col, g, out.sample_mut(i));
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let out = self.forward(x);
        self.input = Some(x.clone());
        out
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("transposed conv backward without forward_train");
        let g = self.window(x.h, x.w);
        let ihw = x.h * x.w;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut dcol = vec![0.0; g.rows() * ihw];
        for i in 0..x.n {
            im2col(dy.sample(i), g, &mut dcol);
            gemm(self.in_channels, g.rows(), ihw, &self.weight.value, false, &dcol, false, 0.0, dx.sample_mut(i));
            gemm(self.in_channels, ihw, g.rows(), x.sample(i), false, &dcol, true, 1.0, &mut self.weight.grad);
        }
        dx
    }

    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize) {
        let (oh, ow) = self.output_size(h, w);
        let macs = self.in_channels * self.out_channels * self.kernel * self.kernel * h * w;
        ((2 * macs) as u64, oh, ow)
    }
}
