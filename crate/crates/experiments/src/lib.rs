//! Desk-scale experiments on synthetic data.
//!
//! [`DeskSetup`] fixes the dataset and training configuration; [`train_desk`]
//! runs all three training stages once and the functions below evaluate the
//! trained networks on held-out data.

use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clickmat_core::compositor::{ambiguity_set, generate_split, AmbiguityCase, DatasetConfig, MattingSample};
use clickmat_core::evaluation::{sad, sparsification, Scope, SparsificationCurve};
use clickmat_core::interaction::{deepest_point, render_hint_map, sample_clicks};
use clickmat_core::seed::derive;
use clickmat_core::{AlphaMatte, ClickSet, HintMap, Polarity};
use clickmat_nn::checkpoint::{load_matting, load_refiner};
use clickmat_nn::{predict, MattingNet, RefineRequest, Refiner, StrategyRegistry};
use clickmat_train::{train_all, Artifacts, TrainConfig};
use serde::{Deserialize, Serialize};

/// Tag separating evaluation click seeds from every training seed.
const EVAL_CLICKS: u64 = 0xE7A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskSetup {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    /// Images in the two-object ambiguity set.
    pub ambiguity_images: usize,
}

impl Default for DeskSetup {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            ambiguity_images: 32,
        }
    }
}

pub struct DeskData {
    pub train: Vec<MattingSample>,
    pub test: Vec<MattingSample>,
}

pub fn desk_data(setup: &DeskSetup) -> Result<DeskData> {
    let split = |name| -> Result<Vec<MattingSample>> {
        Ok(generate_split(&setup.dataset, name)?.into_iter().map(|(_, s)| s).collect())
    };
    Ok(DeskData {
        train: split("train")?,
        test: split("test")?,
    })
}

pub struct DeskModels {
    /// Matting net with its uncertainty decoder.
    pub net: MattingNet,
    pub refiner: Refiner,
    pub train_seconds: f64,
}

/// Trains all stages into `out_dir`, or reloads them when a previous run
/// with the same setup left its checkpoints there.
pub fn train_desk(setup: &DeskSetup, data: &DeskData, out_dir: &Path) -> Result<DeskModels> {
    let setup_file = out_dir.join("desk_setup.json");
    let artifacts = Artifacts::in_dir(out_dir);
    let setup_json = serde_json::to_string_pretty(setup)?;
    if std::fs::read_to_string(&setup_file).ok().as_deref() == Some(setup_json.as_str())
        && artifacts.uncertainty.exists()
        && artifacts.refiner.exists()
    {
        tracing::info!(dir = %out_dir.display(), "reusing desk checkpoints");
        return Ok(DeskModels {
            net: load_matting(&artifacts.uncertainty)?,
            refiner: load_refiner(&artifacts.refiner)?,
            train_seconds: 0.0,
        });
    }
    if out_dir.exists() {
        std::fs::remove_dir_all(out_dir).with_context(|| format!("clearing {}", out_dir.display()))?;
    }
    let start = Instant::now();
    let (trained, _) = train_all(&data.train, &data.test, &setup.train, out_dir)?;
    std::fs::write(&setup_file, setup_json)?;
    Ok(DeskModels {
        net: trained.net,
        refiner: trained.refiner,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Simulated clicks for held-out image `index`, drawn like training clicks
/// but from a disjoint seed space.
pub fn eval_clicks(setup: &DeskSetup, sample: &MattingSample, index: usize) -> Result<ClickSet> {
    let seed = derive(setup.train.seed, &[EVAL_CLICKS, index as u64]);
    Ok(sample_clicks(&sample.alpha_gt, &setup.train.clicks.clone().with_seed(seed))?)
}

fn hints_for(clicks: &ClickSet, sample: &MattingSample) -> Result<HintMap> {
    let (h, w) = sample.shape();
    Ok(render_hint_map(clicks, h, w)?)
}

/// Mean sparsification curve of the predicted uncertainty over `test`.
pub fn uncertainty_curve(
    setup: &DeskSetup,
    net: &MattingNet,
    test: &[MattingSample],
    fractions: &[f64],
) -> Result<SparsificationCurve> {
    let mut curves = Vec::with_capacity(test.len());
    for (i, sample) in test.iter().enumerate() {
        let hints = hints_for(&eval_clicks(setup, sample, i)?, sample)?;
        let out = predict(net, &sample.image, &hints, true)?;
        let sigma = out.sigma.context("net has no uncertainty decoder")?;
        curves.push(sparsification(&out.alpha, &sample.alpha_gt, &sigma, fractions)?);
    }
    SparsificationCurve::mean(&curves).context("empty test set")
}

/// One foreground click deep inside the target and one background click deep
/// inside the distractor, away from the target.
pub fn oracle_clicks(case: &AmbiguityCase, setup: &DeskSetup) -> Result<ClickSet> {
    let cfg = &setup.train.clicks;
    let target = &case.sample.alpha_gt;
    let (h, w) = target.shape();
    let fg: Vec<bool> = target.data().iter().map(|&a| a >= cfg.fg_alpha_threshold).collect();
    let bg: Vec<bool> = case
        .distractor
        .data()
        .iter()
        .zip(target.data())
        .map(|(&d, &t)| d >= cfg.fg_alpha_threshold && t <= cfg.bg_alpha_threshold)
        .collect();
    let mut clicks = ClickSet::empty(cfg.radius);
    let (r, c) = deepest_point(&fg, h, w).context("target has no opaque pixels")?;
    clicks.push(r, c, Polarity::Foreground);
    let (r, c) = deepest_point(&bg, h, w).context("distractor has no free opaque pixels")?;
    clicks.push(r, c, Polarity::Background);
    Ok(clicks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HintComparison {
    pub sad_without: Vec<f64>,
    pub sad_with: Vec<f64>,
}

impl HintComparison {
    pub fn improved_share(&self) -> f64 {
        let better = self.sad_with.iter().zip(&self.sad_without).filter(|(w, wo)| w < wo).count();
        better as f64 / self.sad_with.len().max(1) as f64
    }

    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }
}

/// Full-image SAD on the two-object set with no clicks and with two oracle clicks.
pub fn hint_comparison(setup: &DeskSetup, net: &MattingNet) -> Result<HintComparison> {
    let cases = ambiguity_set(&setup.dataset, setup.ambiguity_images)?;
    let mut out = HintComparison {
        sad_without: Vec::new(),
        sad_with: Vec::new(),
    };
    for case in &cases {
        let sample = &case.sample;
        let (h, w) = sample.shape();
        let everywhere = vec![true; h * w];
        let none = predict(net, &sample.image, &HintMap::zeros(h, w), false)?.alpha;
        let hints = hints_for(&oracle_clicks(case, setup)?, sample)?;
        let two = predict(net, &sample.image, &hints, false)?.alpha;
        out.sad_without.push(sad(&none, &sample.alpha_gt, &everywhere)?);
        out.sad_with.push(sad(&two, &sample.alpha_gt, &everywhere)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetResult {
    pub budget: usize,
    /// Mean transition-region SAD over the test set.
    pub transition_sad: f64,
    /// Pixels that changed outside the selected patches, summed over images.
    pub changed_outside: usize,
}

/// Transition-region SAD after spending each local refinement budget.
pub fn refinement_trend(
    setup: &DeskSetup,
    net: &MattingNet,
    refiner: &Refiner,
    test: &[MattingSample],
    budgets: &[usize],
) -> Result<Vec<BudgetResult>> {
    let registry = StrategyRegistry::default();
    let local = registry.get("local")?;
    let mut results: Vec<BudgetResult> = budgets
        .iter()
        .map(|&budget| BudgetResult {
            budget,
            transition_sad: 0.0,
            changed_outside: 0,
        })
        .collect();
    for (i, sample) in test.iter().enumerate() {
        let hints = hints_for(&eval_clicks(setup, sample, i)?, sample)?;
        let out = predict(net, &sample.image, &hints, true)?;
        let sigma = out.sigma.context("net has no uncertainty decoder")?;
        let mask = Scope::Transition.mask(&sample.partition);
        ensure!(mask.iter().any(|&m| m), "test image {i} has no transition pixels");
        for result in &mut results {
            let refined = local.refine(
                refiner,
                &RefineRequest {
                    image: &sample.image,
                    alpha: &out.alpha,
                    sigma: &sigma,
                    patch_size: setup.train.refine_patch,
                    budget: result.budget,
                },
            )?;
            result.transition_sad += sad(&refined.alpha, &sample.alpha_gt, &mask)? / test.len() as f64;
            result.changed_outside += changed_outside(&out.alpha, &refined.alpha, &refined.patches);
        }
    }
    Ok(results)
}

fn changed_outside(before: &AlphaMatte, after: &AlphaMatte, patches: &[clickmat_core::patches::PatchSpec]) -> usize {
    let w = before.width();
    before
        .data()
        .iter()
        .zip(after.data())
        .enumerate()
        .filter(|&(i, (a, b))| a.to_bits() != b.to_bits() && !patches.iter().any(|p| p.contains(i / w, i % w)))
        .count()
}
