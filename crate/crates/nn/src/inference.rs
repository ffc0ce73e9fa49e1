//! Evaluation-mode entry points on domain types: padding, cropping and
//! compositing refined patches back into a matte.

use clickmat_core::domain::ensure_same_shape;
use clickmat_core::patches::{validate_patches, PatchSpec};
use clickmat_core::{AlphaMatte, HintMap, Image, UncertaintyMap};

use crate::error::{Error, Result};
use crate::matting::{MattingNet, STRIDE};
use crate::refiner::Refiner;
use crate::tensor::{pad_margins, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub alpha: AlphaMatte,
    pub sigma: Option<UncertaintyMap>,
}

/// Runs the net on `image` + `hints`, reflect-padding to a multiple of the
/// encoder stride and cropping the outputs back.
pub fn predict(net: &MattingNet, image: &Image, hints: &HintMap, with_sigma: bool) -> Result<ModelOutput> {
    ensure_same_shape(image.shape(), hints.shape())?;
    let (h, w) = image.shape();
    let (top, bottom) = pad_margins(h, STRIDE);
    let (left, right) = pad_margins(w, STRIDE);
    let x = Tensor::from_image_hint(image, hints).reflect_pad(top, bottom, left, right);
    let out = net.forward(&x, with_sigma)?;
    let alpha = AlphaMatte::from_raw_unchecked(h, w, out.alpha.crop(top, left, h, w).data);
    let sigma = out
        .sigma
        .map(|s| UncertaintyMap::from_raw_unchecked(h, w, s.crop(top, left, h, w).data));
    Ok(ModelOutput { alpha, sigma })
}

pub fn matting_forward(net: &MattingNet, image: &Image, hints: &HintMap) -> Result<AlphaMatte> {
    Ok(predict(net, image, hints, false)?.alpha)
}

/// Alpha and uncertainty from a single encoder pass.
pub fn uncertainty_forward(net: &MattingNet, image: &Image, hints: &HintMap) -> Result<ModelOutput> {
    if !net.has_uncertainty() {
        return Err(Error::MissingUncertaintyHead);
    }
    predict(net, image, hints, true)
}

/// Refines one square patch.
pub fn refinement_forward(refiner: &Refiner, image_patch: &Image, alpha_patch: &AlphaMatte) -> Result<AlphaMatte> {
    ensure_same_shape(image_patch.shape(), alpha_patch.shape())?;
    let (h, w) = image_patch.shape();
    if h != w || h == 0 {
        return Err(Error::InputShape {
            expected: "a non-empty square patch".into(),
            actual: (h, w),
        });
    }
    refine_region(refiner, image_patch, alpha_patch)
}

fn refine_region(refiner: &Refiner, image: &Image, alpha: &AlphaMatte) -> Result<AlphaMatte> {
    let (h, w) = image.shape();
    let out = refiner.forward(&Tensor::from_image_alpha(image, alpha.data()))?;
    Ok(AlphaMatte::from_raw_unchecked(h, w, out.data))
}

/// Replaces each patch of `alpha` with its refinement; every other pixel is copied unchanged.
pub fn refine_matte(refiner: &Refiner, image: &Image, alpha: &AlphaMatte, patches: &[PatchSpec]) -> Result<AlphaMatte> {
    ensure_same_shape(image.shape(), alpha.shape())?;
    let (h, w) = alpha.shape();
    validate_patches(patches, h, w)?;
    let mut data = alpha.data().to_vec();
    for p in patches {
        let refined = refinement_forward(refiner, &image.crop(p.top, p.left, p.k, p.k), &alpha.crop(p.top, p.left, p.k, p.k))?;
        for r in 0..p.k {
            let dst = (p.top + r) * w + p.left;
            data[dst..dst + p.k].copy_from_slice(&refined.data()[r * p.k..(r + 1) * p.k]);
        }
    }
    Ok(AlphaMatte::from_raw_unchecked(h, w, data))
}

/// Runs the refiner over the whole frame.
pub fn refine_global(refiner: &Refiner, image: &Image, alpha: &AlphaMatte) -> Result<AlphaMatte> {
    ensure_same_shape(image.shape(), alpha.shape())?;
    refine_region(refiner, image, alpha)
}
