//! Refinement strategies looked up by name.

use std::collections::BTreeMap;

use clickmat_core::patches::{select_patches, PatchSpec};
use clickmat_core::{AlphaMatte, Image, UncertaintyMap};

use crate::error::{Error, Result};
use crate::inference::{refine_global, refine_matte};
use crate::refiner::Refiner;

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub alpha: AlphaMatte,
    /// Windows that were re-predicted, in selection order.
    pub patches: Vec<PatchSpec>,
    pub refined_pixels: usize,
}

pub struct RefineRequest<'a> {
    pub image: &'a Image,
    pub alpha: &'a AlphaMatte,
    pub sigma: &'a UncertaintyMap,
    pub patch_size: usize,
    pub budget: usize,
}

pub trait RefinementStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn refine(&self, refiner: &Refiner, request: &RefineRequest) -> Result<Refined>;
}

/// Leaves the matte untouched.
pub struct NoRefinement;

impl RefinementStrategy for NoRefinement {
    fn name(&self) -> &'static str {
        "none"
    }

    fn refine(&self, _: &Refiner, request: &RefineRequest) -> Result<Refined> {
        Ok(Refined {
            alpha: request.alpha.clone(),
            patches: Vec::new(),
            refined_pixels: 0,
        })
    }
}

/// Re-predicts the `budget` most uncertain disjoint windows.
pub struct LocalRefinement;

impl RefinementStrategy for LocalRefinement {
    fn name(&self) -> &'static str {
        "local"
    }

    fn refine(&self, refiner: &Refiner, request: &RefineRequest) -> Result<Refined> {
        let patches = select_patches(request.sigma, request.patch_size, request.budget)?;
        let alpha = refine_matte(refiner, request.image, request.alpha, &patches)?;
        let refined_pixels = patches.iter().map(|p| p.k * p.k).sum();
        Ok(Refined {
            alpha,
            patches,
            refined_pixels,
        })
    }
}

/// Runs the refiner over the full frame, ignoring the budget.
pub struct GlobalRefinement;

impl RefinementStrategy for GlobalRefinement {
    fn name(&self) -> &'static str {
        "global"
    }

    fn refine(&self, refiner: &Refiner, request: &RefineRequest) -> Result<Refined> {
        let alpha = refine_global(refiner, request.image, request.alpha)?;
        let (h, w) = alpha.shape();
        Ok(Refined {
            alpha,
            patches: Vec::new(),
            refined_pixels: h * w,
        })
    }
}

pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Box<dyn RefinementStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(NoRefinement));
        registry.register(Box::new(LocalRefinement));
        registry.register(Box::new(GlobalRefinement));
        registry
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            strategies: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, strategy: Box<dyn RefinementStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<&dyn RefinementStrategy> {
        self.strategies
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::Config(format!("unknown refinement strategy {name:?} (known: {:?})", self.names())))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}
