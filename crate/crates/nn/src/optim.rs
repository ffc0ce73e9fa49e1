//! Adam with per-parameter state keyed by name, and the cosine schedule.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::layers::Module;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    state: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            state: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter whose name passes `filter`.
    pub fn step(&mut self, module: &mut dyn Module, lr: f64, filter: &dyn Fn(&str) -> bool) {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        let state = &mut self.state;
        module.visit_mut("", &mut |name, p| {
            if !p.trainable || !filter(name) {
                return;
            }
            let s = state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; p.value.len()],
                v: vec![0.0; p.value.len()],
            });
            for i in 0..p.value.len() {
                let g = p.grad[i] as f64;
                s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g;
                s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g * g;
                let update = lr * (s.m[i] / c1) / ((s.v[i] / c2).sqrt() + eps);
                p.value[i] -= update as f32;
            }
        });
    }
}

/// `base * (1 + cos(pi * step / (total - 1))) / 2`, reaching zero on the last step.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return base;
    }
    let t = step.min(total - 1) as f64 / (total - 1) as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}
