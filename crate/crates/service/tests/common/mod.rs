#![allow(dead_code)]

use clickmat_core::Image;
use clickmat_nn::{MattingConfig, MattingNet, Module, Refiner, RefinerConfig};
use clickmat_service::{Engine, EngineConfig, MattingService};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_net() -> MattingNet {
    let mut net = MattingNet::new(MattingConfig {
        base_width: 4,
        seed: 3,
        ..MattingConfig::default()
    })
    .unwrap();
    net.attach_uncertainty(4);
    net
}

/// A refiner whose output tail is no longer zero, so refinement changes pixels.
pub fn active_refiner() -> Refiner {
    let mut refiner = Refiner::new(RefinerConfig {
        base_width: 4,
        seed: 5,
        ..RefinerConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    refiner.visit_mut("", &mut |name, p| {
        if name.starts_with("tail") {
            for v in &mut p.value {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    });
    refiner
}

pub fn engine_config() -> EngineConfig {
    EngineConfig {
        patch_size: 16,
        click_radius: 4,
        ..EngineConfig::default()
    }
}

pub fn service_with(refiner: Option<Refiner>, config: EngineConfig) -> MattingService {
    MattingService::new(Engine::new(tiny_net(), refiner, config).unwrap())
}

pub fn service() -> MattingService {
    service_with(Some(active_refiner()), engine_config())
}

pub fn test_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cy, cx) = (height as f32 / 2.0, width as f32 / 2.0);
    let mut data = Vec::with_capacity(height * width * 3);
    for r in 0..height {
        for c in 0..width {
            let inside = ((r as f32 - cy).powi(2) + (c as f32 - cx).powi(2)).sqrt() < height.min(width) as f32 / 3.0;
            let base = if inside { [0.9, 0.3, 0.2] } else { [0.1, 0.4, 0.8] };
            for v in base {
                data.push((v + rng.random_range(-0.05..0.05f32)).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(height, width, data).unwrap()
}

pub fn png_bytes(height: usize, width: usize, seed: u64) -> Vec<u8> {
    clickmat_core::io::encode_image_8bit(&test_image(height, width, seed)).unwrap()
}
