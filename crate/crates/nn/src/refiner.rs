//! Patch refinement network: full-resolution convolutions only, predicting a
//! residual that is added to the input alpha.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{join, residual_stage, Conv2d, ConvBn, Layer, Module, Param, ResidualBlock, Sequential};
use crate::matting::{alpha_activation, alpha_activation_grad};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinerConfig {
    pub base_width: usize,
    pub blocks: usize,
    pub seed: u64,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            blocks: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refiner {
    pub config: RefinerConfig,
    pub stem: ConvBn<Conv2d>,
    pub body: Sequential<ResidualBlock>,
    /// Zero-initialised, so a fresh refiner returns its input alpha.
    pub tail: Conv2d,
    pre_clip: Option<Tensor>,
}

impl Refiner {
    pub fn new(config: RefinerConfig) -> Result<Self> {
        if config.base_width == 0 || config.blocks == 0 {
            return Err(Error::Config("refiner width and block count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.base_width;
        Ok(Self {
            stem: ConvBn::conv3x3(4, w, 1, &mut rng),
            body: residual_stage(w, w, config.blocks, 1, &mut rng),
            tail: Conv2d::zeroed(w, 1, 3, 1),
            config,
            pre_clip: None,
        })
    }

    fn check_input(x: &Tensor) -> Result<()> {
        if x.c != 4 || x.h == 0 || x.w == 0 {
            return Err(Error::InputShape {
                expected: "4 channels (RGB + alpha)".into(),
                actual: (x.h, x.w),
            });
        }
        Ok(())
    }

    /// Input alpha plus the predicted correction, before clipping.
    fn residual_sum(x: &Tensor, delta: Tensor) -> Tensor {
        let mut out = delta;
        let hw = x.h * x.w;
        for n in 0..x.n {
            let alpha = &x.sample(n)[3 * hw..];
            for (o, &a) in out.sample_mut(n).iter_mut().zip(alpha) {
                *o += a;
            }
        }
        out
    }

    /// Refined alpha for an RGB + alpha input of any size.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Self::check_input(x)?;
        let delta = self.tail.forward(&self.body.forward(&self.stem.forward(x)));
        Ok(Self::residual_sum(x, delta).map(alpha_activation))
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        Self::check_input(x)?;
        let h = self.stem.forward_train(x);
        let h = self.body.forward_train(&h);
        let delta = self.tail.forward_train(&h);
        let pre = Self::residual_sum(x, delta);
        let out = pre.map(alpha_activation);
        self.pre_clip = Some(pre);
        Ok(out)
    }

    /// Accumulates parameter gradients; the input itself is data, so nothing is returned.
    pub fn backward(&mut self, dalpha: &Tensor) {
        let pre = self.pre_clip.take().expect("backward without forward_train");
        let mut g = dalpha.clone();
        for (g, &p) in g.data.iter_mut().zip(&pre.data) {
            *g = alpha_activation_grad(p, *g);
        }
        let g = self.tail.backward(&g);
        let g = self.body.backward(&g);
        self.stem.backward(&g);
    }

    /// Floating-point operations for one `h x w` input (including the residual add).
    pub fn flops(&self, h: usize, w: usize) -> u64 {
        let (a, h, w) = self.stem.flops(h, w);
        let (b, h, w) = self.body.flops(h, w);
        let (c, h, w) = self.tail.flops(h, w);
        a + b + c + (h * w) as u64
    }
}

impl Module for Refiner {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.stem.visit(&join(prefix, "stem"), f);
        self.body.visit(&join(prefix, "body"), f);
        self.tail.visit(&join(prefix, "tail"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        self.body.visit_mut(&join(prefix, "body"), f);
        self.tail.visit_mut(&join(prefix, "tail"), f);
    }
}
