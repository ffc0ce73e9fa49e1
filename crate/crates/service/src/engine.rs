//! Stateless inference shared by every session.

use std::io::Cursor;

use clickmat_core::interaction::render_hint_map;
use clickmat_core::{AlphaMatte, ClickSet, Image, UncertaintyMap};
use clickmat_nn::{predict, MattingNet, RefineRequest, Refined, Refiner, StrategyRegistry};
use image::imageops::{self, FilterType};
use image::{ImageBuffer, ImageReader, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Longer inputs are downscaled to this side before inference.
    pub max_side: usize,
    /// Uploads with more decoded pixels than this are rejected outright.
    pub max_pixels: usize,
    pub patch_size: usize,
    /// Name of the refinement strategy used by `refine`.
    pub strategy: String,
    pub click_radius: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_side: 2048,
            max_pixels: 64 * 1024 * 1024,
            patch_size: 64,
            strategy: "local".into(),
            click_radius: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub alpha: AlphaMatte,
    pub sigma: Option<UncertaintyMap>,
}

/// A decoded upload, possibly shrunk to fit `max_side`.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub image: Image,
    pub original_shape: (usize, usize),
    pub downscaled: bool,
}

pub struct Engine {
    net: MattingNet,
    refiner: Option<Refiner>,
    strategies: StrategyRegistry,
    config: EngineConfig,
}

impl Engine {
    pub fn new(net: MattingNet, refiner: Option<Refiner>, config: EngineConfig) -> Result<Self> {
        Self::with_strategies(net, refiner, config, StrategyRegistry::default())
    }

    pub fn with_strategies(
        net: MattingNet,
        refiner: Option<Refiner>,
        config: EngineConfig,
        strategies: StrategyRegistry,
    ) -> Result<Self> {
        if config.max_side == 0 || config.patch_size == 0 || config.click_radius == 0 {
            return Err(ServiceError::InvalidRequest(
                "max_side, patch_size and click_radius must be positive".into(),
            ));
        }
        strategies.get(&config.strategy)?;
        Ok(Self {
            net,
            refiner,
            strategies,
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn has_refiner(&self) -> bool {
        self.refiner.is_some()
    }

    pub fn has_uncertainty(&self) -> bool {
        self.net.has_uncertainty()
    }

    pub fn prepare(&self, bytes: &[u8]) -> Result<PreparedImage> {
        let reader = ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| ServiceError::Decode(e.to_string()))?;
        let (w, h) = reader
            .into_dimensions()
            .map_err(|e| ServiceError::Decode(e.to_string()))?;
        let (h, w) = (h as usize, w as usize);
        if h * w > self.config.max_pixels {
            return Err(ServiceError::TooLarge {
                height: h,
                width: w,
                max_pixels: self.config.max_pixels,
            });
        }
        let image = clickmat_core::io::decode_image(bytes).map_err(|e| ServiceError::Decode(e.to_string()))?;
        let longest = h.max(w);
        if longest <= self.config.max_side {
            return Ok(PreparedImage {
                image,
                original_shape: (h, w),
                downscaled: false,
            });
        }
        let scale = self.config.max_side as f64 / longest as f64;
        let nh = ((h as f64 * scale).round() as usize).clamp(1, self.config.max_side);
        let nw = ((w as f64 * scale).round() as usize).clamp(1, self.config.max_side);
        Ok(PreparedImage {
            image: resize(&image, nh, nw)?,
            original_shape: (h, w),
            downscaled: true,
        })
    }

    /// Matte and uncertainty for `image` under `clicks`; a pure function of its inputs.
    pub fn infer(&self, image: &Image, clicks: &ClickSet) -> Result<Inference> {
        let (h, w) = image.shape();
        let hints = render_hint_map(clicks, h, w)?;
        let out = predict(&self.net, image, &hints, self.net.has_uncertainty())?;
        Ok(Inference {
            alpha: out.alpha,
            sigma: out.sigma,
        })
    }

    /// Spends a budget of `k` patches on `inference`. Zero is a no-op that needs no refiner.
    pub fn refine(&self, image: &Image, inference: &Inference, k: usize) -> Result<Refined> {
        let strategy = if k == 0 { "none" } else { self.config.strategy.as_str() };
        let strategy = self.strategies.get(strategy)?;
        let refiner = match (&self.refiner, k) {
            (Some(r), _) => r,
            (None, 0) => {
                return Ok(Refined {
                    alpha: inference.alpha.clone(),
                    patches: Vec::new(),
                    refined_pixels: 0,
                })
            }
            (None, _) => return Err(ServiceError::RefinerUnavailable),
        };
        let sigma = inference.sigma.as_ref().ok_or(ServiceError::UncertaintyUnavailable)?;
        let (h, w) = image.shape();
        let request = RefineRequest {
            image,
            alpha: &inference.alpha,
            sigma,
            // small images get one window covering the short side
            patch_size: self.config.patch_size.min(h).min(w),
            budget: k,
        };
        Ok(strategy.refine(refiner, &request)?)
    }
}

fn resize(image: &Image, height: usize, width: usize) -> Result<Image> {
    let (h, w) = image.shape();
    let buf = ImageBuffer::<Rgb<f32>, _>::from_raw(w as u32, h as u32, image.data().to_vec())
        .ok_or_else(|| ServiceError::Internal("image buffer size mismatch".into()))?;
    let out = imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
    let data = out.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Image::new(height, width, data)?)
}
