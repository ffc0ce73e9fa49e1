//! The matting network: a residual encoder shared by an alpha decoder and an
//! optional uncertainty decoder of the same shape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use clickmat_core::SIGMA_FLOOR;

use crate::error::{Error, Result};
use crate::layers::{
    join, residual_stage, Conv2d, ConvBn, ConvTranspose2d, Layer, Module, Param, ResidualBlock, Sequential,
};
use crate::tensor::Tensor;

/// Overall downsampling of the encoder; inputs must be multiples of this.
pub const STRIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MattingConfig {
    pub base_width: usize,
    pub encoder_blocks: [usize; 4],
    pub decoder_blocks: [usize; 4],
    pub input_channels: usize,
    /// Seed of the weight initialisation.
    pub seed: u64,
}

impl Default for MattingConfig {
    fn default() -> Self {
        Self {
            base_width: 16,
            encoder_blocks: [3, 4, 4, 2],
            decoder_blocks: [2, 3, 3, 2],
            input_channels: 4,
            seed: 0,
        }
    }
}

impl MattingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        if self.input_channels != 4 {
            return Err(Error::Config("input_channels must be 4 (RGB + hint)".into()));
        }
        if self.encoder_blocks.iter().sum::<usize>() != 13 || self.encoder_blocks.contains(&0) {
            return Err(Error::Config(format!(
                "encoder stages {:?} must be non-empty and total 13 blocks",
                self.encoder_blocks
            )));
        }
        if self.decoder_blocks.iter().sum::<usize>() != 10 || self.decoder_blocks.contains(&0) {
            return Err(Error::Config(format!(
                "decoder stages {:?} must be non-empty and total 10 blocks",
                self.decoder_blocks
            )));
        }
        Ok(())
    }
}

/// Encoder activations kept for the decoders' skip connections.
#[derive(Debug, Clone)]
pub struct Features {
    /// Full resolution, `w` channels.
    pub e0: Tensor,
    /// 1/2, `w` channels.
    pub e1: Tensor,
    /// 1/4, `2w`.
    pub s1: Tensor,
    /// 1/8, `4w`.
    pub s2: Tensor,
    /// 1/16, `8w`.
    pub s3: Tensor,
    /// 1/32, `8w`.
    pub e4: Tensor,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub stem: Sequential<ConvBn<Conv2d>>,
    pub stages: Vec<Sequential<ResidualBlock>>,
}

impl Encoder {
    fn new(config: &MattingConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = config.base_width;
        let stem = Sequential {
            layers: vec![
                ConvBn::conv3x3(config.input_channels, w, 1, rng),
                ConvBn::conv3x3(w, w, 2, rng),
                ConvBn::conv3x3(w, 2 * w, 2, rng),
            ],
        };
        let b = config.encoder_blocks;
        let stages = vec![
            residual_stage(2 * w, 2 * w, b[0], 1, rng),
            residual_stage(2 * w, 4 * w, b[1], 2, rng),
            residual_stage(4 * w, 8 * w, b[2], 2, rng),
            residual_stage(8 * w, 8 * w, b[3], 2, rng),
        ];
        Self { stem, stages }
    }

    fn forward(&self, x: &Tensor) -> Features {
        let e0 = self.stem.layers[0].forward(x);
        let e1 = self.stem.layers[1].forward(&e0);
        let t = self.stem.layers[2].forward(&e1);
        let s1 = self.stages[0].forward(&t);
        let s2 = self.stages[1].forward(&s1);
        let s3 = self.stages[2].forward(&s2);
        let e4 = self.stages[3].forward(&s3);
        Features { e0, e1, s1, s2, s3, e4 }
    }

    fn forward_train(&mut self, x: &Tensor) -> Features {
        let e0 = self.stem.layers[0].forward_train(x);
        let e1 = self.stem.layers[1].forward_train(&e0);
        let t = self.stem.layers[2].forward_train(&e1);
        let s1 = self.stages[0].forward_train(&t);
        let s2 = self.stages[1].forward_train(&s1);
        let s3 = self.stages[2].forward_train(&s2);
        let e4 = self.stages[3].forward_train(&s3);
        Features { e0, e1, s1, s2, s3, e4 }
    }

    /// Takes the gradients of every feature map and returns the input gradient.
    fn backward(&mut self, mut g: Features) -> Tensor {
        g.s3.add_assign(&self.stages[3].backward(&g.e4));
        g.s2.add_assign(&self.stages[2].backward(&g.s3));
        g.s1.add_assign(&self.stages[1].backward(&g.s2));
        let dt = self.stages[0].backward(&g.s1);
        g.e1.add_assign(&self.stem.layers[2].backward(&dt));
        g.e0.add_assign(&self.stem.layers[1].backward(&g.e1));
        self.stem.layers[0].backward(&g.e0)
    }

    fn flops(&self, h: usize, w: usize) -> u64 {
        let (a, h, w) = self.stem.flops(h, w);
        let mut total = a;
        let (mut h, mut w) = (h, w);
        for s in &self.stages {
            let (f, oh, ow) = s.flops(h, w);
            total += f;
            (h, w) = (oh, ow);
        }
        total
    }
}

impl Module for Encoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &format!("stage{}", i + 1)), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &format!("stage{}", i + 1)), f);
        }
    }
}

/// Residual stages interleaved with 2x upsampling and additive skips, ending
/// in a linear 3x3 head.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub stages: Vec<Sequential<ResidualBlock>>,
    pub ups: Vec<ConvBn<ConvTranspose2d>>,
    pub head: Conv2d,
}

impl Decoder {
    fn new(config: &MattingConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = config.base_width;
        let b = config.decoder_blocks;
        let stages = vec![
            residual_stage(8 * w, 8 * w, b[0], 1, rng),
            residual_stage(8 * w, 4 * w, b[1], 1, rng),
            residual_stage(4 * w, 2 * w, b[2], 1, rng),
            residual_stage(2 * w, 2 * w, b[3], 1, rng),
        ];
        let ups = vec![
            ConvBn::upsample(8 * w, 8 * w, rng),
            ConvBn::upsample(4 * w, 4 * w, rng),
            ConvBn::upsample(2 * w, 2 * w, rng),
            ConvBn::upsample(2 * w, w, rng),
            ConvBn::upsample(w, w, rng),
        ];
        let head = Conv2d::new(w, 1, 3, 1, 1, true, rng);
        Self { stages, ups, head }
    }

    fn forward(&self, f: &Features) -> Tensor {
        let mut x = self.stages[0].forward(&f.e4);
        for (i, skip) in [&f.s3, &f.s2, &f.s1].into_iter().enumerate() {
            x = self.ups[i].forward(&x);
            x.add_assign(skip);
            x = self.stages[i + 1].forward(&x);
        }
        for (i, skip) in [&f.e1, &f.e0].into_iter().enumerate() {
            x = self.ups[3 + i].forward(&x);
            x.add_assign(skip);
        }
        self.head.forward(&x)
    }

    fn forward_train(&mut self, f: &Features) -> Tensor {
        let mut x = self.stages[0].forward_train(&f.e4);
        for (i, skip) in [&f.s3, &f.s2, &f.s1].into_iter().enumerate() {
            x = self.ups[i].forward_train(&x);
            x.add_assign(skip);
            x = self.stages[i + 1].forward_train(&x);
        }
        for (i, skip) in [&f.e1, &f.e0].into_iter().enumerate() {
            x = self.ups[3 + i].forward_train(&x);
            x.add_assign(skip);
        }
        self.head.forward_train(&x)
    }

    /// Gradient of the head output with respect to every skip input.
    fn backward(&mut self, draw: &Tensor) -> Features {
        let de0 = self.head.backward(draw);
        let de1 = self.ups[4].backward(&de0);
        let mut dx = self.ups[3].backward(&de1);
        dx = self.stages[3].backward(&dx);
        let ds1 = dx;
        dx = self.stages[2].backward(&self.ups[2].backward(&ds1));
        let ds2 = dx;
        dx = self.stages[1].backward(&self.ups[1].backward(&ds2));
        let ds3 = dx;
        let de4 = self.stages[0].backward(&self.ups[0].backward(&ds3));
        Features {
            e0: de0,
            e1: de1,
            s1: ds1,
            s2: ds2,
            s3: ds3,
            e4: de4,
        }
    }

    fn flops(&self, h: usize, w: usize) -> u64 {
        let (mut h, mut w) = (h / STRIDE, w / STRIDE);
        let (mut total, _, _) = self.stages[0].flops(h, w);
        for i in 0..5 {
            let (f, oh, ow) = self.ups[i].flops(h, w);
            (h, w) = (oh, ow);
            let channels = self.ups[i].bn.channels as u64;
            total += f + channels * (h * w) as u64;
            if i < 3 {
                let (f, _, _) = self.stages[i + 1].flops(h, w);
                total += f;
            }
        }
        total + self.head.flops(h, w).0
    }
}

impl Module for Decoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &format!("stage{}", i + 1)), f);
        }
        for (i, u) in self.ups.iter().enumerate() {
            u.visit(&join(prefix, &format!("up{}", i + 1)), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &format!("stage{}", i + 1)), f);
        }
        for (i, u) in self.ups.iter_mut().enumerate() {
            u.visit_mut(&join(prefix, &format!("up{}", i + 1)), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Hard clip to `[0, 1]`.
pub fn alpha_activation(raw: f32) -> f32 {
    raw.clamp(0.0, 1.0)
}

/// Gradient through the clip. Outside the range the gradient is kept only
/// when a descent step would move the value back towards `[0, 1]`, so
/// saturated pixels can still recover.
pub fn alpha_activation_grad(raw: f32, grad: f32) -> f32 {
    if (0.0..=1.0).contains(&raw) || (raw < 0.0 && grad < 0.0) || (raw > 1.0 && grad > 0.0) {
        grad
    } else {
        0.0
    }
}

/// `softplus(raw) + SIGMA_FLOOR`, computed without overflow.
pub fn sigma_activation(raw: f32) -> f32 {
    let r = raw as f64;
    let softplus = if r > 30.0 { r } else { r.exp().ln_1p() };
    (softplus + SIGMA_FLOOR as f64) as f32
}

/// Derivative of [`sigma_activation`]: the logistic sigmoid.
pub fn sigma_activation_grad(raw: f32) -> f32 {
    (1.0 / (1.0 + (-(raw as f64)).exp())) as f32
}

#[derive(Debug, Clone)]
pub struct NetOutput {
    pub alpha: Tensor,
    pub sigma: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct MattingNet {
    pub config: MattingConfig,
    pub encoder: Encoder,
    pub alpha_decoder: Decoder,
    pub sigma_decoder: Option<Decoder>,
    alpha_raw: Option<Tensor>,
    sigma_raw: Option<Tensor>,
}

pub const ALPHA_DECODER: &str = "alpha_decoder";
pub const SIGMA_DECODER: &str = "sigma_decoder";
pub const ENCODER: &str = "encoder";

impl MattingNet {
    pub fn new(config: MattingConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = Encoder::new(&config, &mut rng);
        let alpha_decoder = Decoder::new(&config, &mut rng);
        Ok(Self {
            config,
            encoder,
            alpha_decoder,
            sigma_decoder: None,
            alpha_raw: None,
            sigma_raw: None,
        })
    }

    /// Adds a freshly initialised uncertainty decoder (replacing any existing one).
    pub fn attach_uncertainty(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sigma_decoder = Some(Decoder::new(&self.config, &mut rng));
    }

    pub fn detach_uncertainty(&mut self) -> Option<Decoder> {
        self.sigma_decoder.take()
    }

    pub fn has_uncertainty(&self) -> bool {
        self.sigma_decoder.is_some()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.c != self.config.input_channels || x.h % STRIDE != 0 || x.w % STRIDE != 0 || x.h == 0 || x.w == 0 {
            return Err(Error::InputShape {
                expected: format!("{} channels, sides a positive multiple of {STRIDE}", self.config.input_channels),
                actual: (x.h, x.w),
            });
        }
        Ok(())
    }

    /// Evaluation pass on a padded input. One encoder pass feeds both decoders.
    pub fn forward(&self, x: &Tensor, with_sigma: bool) -> Result<NetOutput> {
        self.check_input(x)?;
        if with_sigma && self.sigma_decoder.is_none() {
            return Err(Error::MissingUncertaintyHead);
        }
        let features = self.encoder.forward(x);
        let alpha = self.alpha_decoder.forward(&features).map(alpha_activation);
        let sigma = match (&self.sigma_decoder, with_sigma) {
            (Some(d), true) => Some(d.forward(&features).map(sigma_activation)),
            _ => None,
        };
        Ok(NetOutput { alpha, sigma })
    }

    /// Training pass of encoder and alpha decoder; returns alpha.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let features = self.encoder.forward_train(x);
        let raw = self.alpha_decoder.forward_train(&features);
        let alpha = raw.map(alpha_activation);
        self.alpha_raw = Some(raw);
        Ok(alpha)
    }

    /// Accumulates parameter gradients from `d loss / d alpha`; returns the input gradient.
    pub fn backward(&mut self, dalpha: &Tensor) -> Tensor {
        let raw = self.alpha_raw.take().expect("backward without forward_train");
        let mut draw = dalpha.clone();
        for (g, &r) in draw.data.iter_mut().zip(&raw.data) {
            *g = alpha_activation_grad(r, *g);
        }
        let features = self.alpha_decoder.backward(&draw);
        self.encoder.backward(features)
    }

    /// Uncertainty-stage pass: encoder and alpha decoder run in evaluation
    /// mode, only the uncertainty decoder caches for training.
    pub fn forward_train_sigma(&mut self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let features = self.encoder.forward(x);
        let alpha = self.alpha_decoder.forward(&features).map(alpha_activation);
        let decoder = self.sigma_decoder.as_mut().ok_or(Error::MissingUncertaintyHead)?;
        let raw = decoder.forward_train(&features);
        let sigma = raw.map(sigma_activation);
        self.sigma_raw = Some(raw);
        Ok((alpha, sigma))
    }

    /// Accumulates gradients of the uncertainty decoder only.
    pub fn backward_sigma(&mut self, dsigma: &Tensor) {
        let raw = self.sigma_raw.take().expect("backward_sigma without forward_train_sigma");
        let mut draw = dsigma.clone();
        for (g, &r) in draw.data.iter_mut().zip(&raw.data) {
            *g *= sigma_activation_grad(r);
        }
        let decoder = self.sigma_decoder.as_mut().expect("sigma decoder present after forward");
        decoder.backward(&draw);
    }

    /// Floating-point operations of one evaluation pass on an `h x w` (padded) input.
    pub fn flops(&self, h: usize, w: usize, with_sigma: bool) -> u64 {
        let mut total = self.encoder.flops(h, w) + self.alpha_decoder.flops(h, w);
        if let (Some(d), true) = (&self.sigma_decoder, with_sigma) {
            total += d.flops(h, w);
        }
        total
    }
}

impl Module for MattingNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&join(prefix, ENCODER), f);
        self.alpha_decoder.visit(&join(prefix, ALPHA_DECODER), f);
        if let Some(d) = &self.sigma_decoder {
            d.visit(&join(prefix, SIGMA_DECODER), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, ENCODER), f);
        self.alpha_decoder.visit_mut(&join(prefix, ALPHA_DECODER), f);
        if let Some(d) = &mut self.sigma_decoder {
            d.visit_mut(&join(prefix, SIGMA_DECODER), f);
        }
    }
}

