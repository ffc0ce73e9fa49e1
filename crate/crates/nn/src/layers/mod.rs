//! Layers with explicit forward caches and hand-written backward passes.
//!
//! `forward` is the pure evaluation path (running batch-norm statistics, no
//! caches). `forward_train` uses batch statistics and stores what `backward`
//! needs; `backward` consumes that cache, accumulates parameter gradients and
//! returns the gradient with respect to the layer input.

mod conv;
mod norm;

pub use conv::{Conv2d, ConvTranspose2d};
pub use norm::BatchNorm2d;

use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// A named tensor of weights (trainable) or statistics (buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    /// Same length as `value` for trainable parameters, empty for buffers.
    pub grad: Vec<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn new(shape: Vec<usize>, value: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Self {
            shape,
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(shape: Vec<usize>, value: Vec<f32>) -> Self {
        Self {
            shape,
            value,
            grad: Vec::new(),
            trainable: false,
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything holding named parameters, visited in a fixed order.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));
}

pub trait Layer: Module {
    fn forward(&self, x: &Tensor) -> Tensor;
    fn forward_train(&mut self, x: &Tensor) -> Tensor;
    fn backward(&mut self, dy: &Tensor) -> Tensor;
    /// Floating-point operations for one `h x w` sample, and the output size.
    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize);
}

pub fn zero_grad(module: &mut dyn Module) {
    module.visit_mut("", &mut |_, p| p.grad.fill(0.0));
}

/// Number of trainable scalars.
pub fn parameter_count(module: &dyn Module) -> usize {
    let mut n = 0;
    module.visit("", &mut |_, p| {
        if p.trainable {
            n += p.value.len();
        }
    });
    n
}

fn relu_in_place(t: &mut Tensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

/// Zeroes `grad` wherever the forward activation was not positive.
fn relu_backward(grad: &mut Tensor, activation: &Tensor) {
    for (g, &a) in grad.data.iter_mut().zip(&activation.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Convolution (plain or transposed) followed by batch norm and optionally ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn<C> {
    pub conv: C,
    pub bn: BatchNorm2d,
    pub relu: bool,
    output: Option<Tensor>,
}

impl<C: Layer> ConvBn<C> {
    pub fn new(conv: C, channels: usize, relu: bool) -> Self {
        Self {
            conv,
            bn: BatchNorm2d::new(channels),
            relu,
            output: None,
        }
    }
}

impl ConvBn<Conv2d> {
    pub fn conv3x3(in_c: usize, out_c: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(Conv2d::new(in_c, out_c, 3, stride, 1, false, rng), out_c, true)
    }
}

impl ConvBn<ConvTranspose2d> {
    /// Doubles the spatial size.
    pub fn upsample(in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(ConvTranspose2d::new(in_c, out_c, 4, 2, 1, rng), out_c, true)
    }
}

impl<C: Layer> Module for ConvBn<C> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}

impl<C: Layer> Layer for ConvBn<C> {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut y = self.bn.forward(&self.conv.forward(x));
        if self.relu {
            relu_in_place(&mut y);
        }
        y
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let z = self.conv.forward_train(x);
        let mut y = self.bn.forward_train(&z);
        if self.relu {
            relu_in_place(&mut y);
            self.output = Some(y.clone());
        }
        y
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mut g = dy.clone();
        if self.relu {
            let out = self.output.take().expect("backward without forward_train");
            relu_backward(&mut g, &out);
        }
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }

    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize) {
        let (conv, oh, ow) = self.conv.flops(h, w);
        let (bn, _, _) = self.bn.flops(oh, ow);
        let act = if self.relu { (self.bn.channels * oh * ow) as u64 } else { 0 };
        (conv + bn + act, oh, ow)
    }
}

/// Two 3x3 convolutions with a (projected when needed) identity shortcut.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub shortcut: Option<(Conv2d, BatchNorm2d)>,
    hidden: Option<Tensor>,
    output: Option<Tensor>,
}

impl ResidualBlock {
    pub fn new(in_c: usize, out_c: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv1 = Conv2d::new(in_c, out_c, 3, stride, 1, false, rng);
        let conv2 = Conv2d::new(out_c, out_c, 3, 1, 1, false, rng);
        let shortcut = (stride != 1 || in_c != out_c)
            .then(|| (Conv2d::new(in_c, out_c, 1, stride, 0, false, rng), BatchNorm2d::new(out_c)));
        Self {
            conv1,
            bn1: BatchNorm2d::new(out_c),
            conv2,
            // the residual branch starts silent, so a fresh block is (close to) identity
            bn2: BatchNorm2d::with_gamma(out_c, 0.0),
            shortcut,
            hidden: None,
            output: None,
        }
    }
}

impl Module for ResidualBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &self.shortcut {
            conv.visit(&join(prefix, "shortcut.conv"), f);
            bn.visit(&join(prefix, "shortcut.bn"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.bn1.visit_mut(&join(prefix, "bn1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.bn2.visit_mut(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &mut self.shortcut {
            conv.visit_mut(&join(prefix, "shortcut.conv"), f);
            bn.visit_mut(&join(prefix, "shortcut.bn"), f);
        }
    }
}

impl Layer for ResidualBlock {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut a = self.bn1.forward(&self.conv1.forward(x));
        relu_in_place(&mut a);
        let mut y = self.bn2.forward(&self.conv2.forward(&a));
        match &self.shortcut {
            Some((conv, bn)) => y.add_assign(&bn.forward(&conv.forward(x))),
            None => y.add_assign(x),
        }
        relu_in_place(&mut y);
        y
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let z = self.conv1.forward_train(x);
        let mut a = self.bn1.forward_train(&z);
        relu_in_place(&mut a);
        let z = self.conv2.forward_train(&a);
        let mut y = self.bn2.forward_train(&z);
        match &mut self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward_train(x);
                y.add_assign(&bn.forward_train(&s));
            }
            None => y.add_assign(x),
        }
        relu_in_place(&mut y);
        self.hidden = Some(a);
        self.output = Some(y.clone());
        y
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let out = self.output.take().expect("backward without forward_train");
        let hidden = self.hidden.take().expect("backward without forward_train");
        let mut dz = dy.clone();
        relu_backward(&mut dz, &out);
        let mut da = self.conv2.backward(&self.bn2.backward(&dz));
        relu_backward(&mut da, &hidden);
        let mut dx = self.conv1.backward(&self.bn1.backward(&da));
        match &mut self.shortcut {
            Some((conv, bn)) => dx.add_assign(&conv.backward(&bn.backward(&dz))),
            None => dx.add_assign(&dz),
        }
        dx
    }

    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize) {
        let (c1, oh, ow) = self.conv1.flops(h, w);
        let (b1, _, _) = self.bn1.flops(oh, ow);
        let (c2, _, _) = self.conv2.flops(oh, ow);
        let (b2, _, _) = self.bn2.flops(oh, ow);
        let elems = (self.bn2.channels * oh * ow) as u64;
        let mut total = c1 + b1 + c2 + b2 + 3 * elems; // two ReLUs and the residual add
        if let Some((conv, bn)) = &self.shortcut {
            total += conv.flops(h, w).0 + bn.flops(oh, ow).0;
        }
        (total, oh, ow)
    }
}

/// Layers applied in order; parameters are named by position.
#[derive(Debug, Clone)]
pub struct Sequential<L> {
    pub layers: Vec<L>,
}

impl<L: Layer> Module for Sequential<L> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl<L: Layer> Layer for Sequential<L> {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        for l in &self.layers {
            y = l.forward(&y);
        }
        y
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        for l in &mut self.layers {
            y = l.forward_train(&y);
        }
        y
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g);
        }
        g
    }

    fn flops(&self, h: usize, w: usize) -> (u64, usize, usize) {
        let (mut total, mut h, mut w) = (0, h, w);
        for l in &self.layers {
            let (f, oh, ow) = l.flops(h, w);
            total += f;
            (h, w) = (oh, ow);
        }
        (total, h, w)
    }
}

/// A stage of residual blocks; the first may change stride and width.
pub fn residual_stage(in_c: usize, out_c: usize, blocks: usize, stride: usize, rng: &mut ChaCha8Rng) -> Sequential<ResidualBlock> {
    let layers = (0..blocks)
        .map(|i| {
            if i == 0 {
                ResidualBlock::new(in_c, out_c, stride, rng)
            } else {
                ResidualBlock::new(out_c, out_c, 1, rng)
            }
        })
        .collect();
    Sequential { layers }
}

#[cfg(test)]
mod tests;
