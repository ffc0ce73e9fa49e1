use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor {
    let data = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(n, c, h, w, data)
}

/// `sum(layer(x) * probe)` evaluated in f64 on a fresh training pass.
fn objective<L: Layer + Clone>(layer: &L, x: &Tensor, probe: &Tensor) -> f64 {
    let mut l = layer.clone();
    let y = l.forward_train(x);
    y.data.iter().zip(&probe.data).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Central difference of `f` at 0, or `None` when the four half-step slopes
/// disagree (a ReLU kink lies within the step).
fn smooth_derivative(f: &dyn Fn(f32) -> f64, eps: f32) -> Option<f64> {
    let h = eps / 2.0;
    let values: Vec<f64> = [-eps, -h, 0.0, h, eps].iter().map(|&d| f(d)).collect();
    let slopes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h as f64).collect();
    let (lo, hi) = slopes.iter().fold((f64::MAX, f64::MIN), |(a, b), &s| (a.min(s), b.max(s)));
    let scale = lo.abs().max(hi.abs()).max(0.05);
    (hi - lo <= 0.1 * scale).then(|| (values[4] - values[0]) / (2.0 * eps as f64))
}

/// Compares analytic input and parameter gradients against finite differences
/// at every sampled coordinate that is not next to a kink. Single-precision
/// forward passes limit the differences to about 1% accuracy.
fn check_layer<L: Layer + Clone>(layer: L, x: Tensor, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l = layer.clone();
    let y = l.forward_train(&x);
    let probe = random_tensor(&mut rng, y.n, y.c, y.h, y.w);
    zero_grad(&mut l);
    let dx = l.backward(&probe);
    let eps = 1e-3f32;
    let (mut checked, mut skipped) = (0, 0);
    let mut compare = |label: String, analytic: f64, f: &dyn Fn(f32) -> f64| match smooth_derivative(f, eps) {
        Some(numeric) => {
            let tol = 3e-2 * analytic.abs().max(numeric.abs()).max(0.05);
            assert!((analytic - numeric).abs() <= tol, "{label}: {analytic} vs {numeric}");
            checked += 1;
        }
        None => skipped += 1,
    };

    for i in (0..x.data.len()).step_by((x.data.len() / 17).max(1)) {
        compare(format!("dx[{i}]"), dx.data[i] as f64, &|d| {
            let mut x = x.clone();
            x.data[i] += d;
            objective(&layer, &x, &probe)
        });
    }

    let mut names = Vec::new();
    l.visit("", &mut |name, p| {
        if p.trainable {
            names.push((name.to_string(), p.grad.clone()));
        }
    });
    for (name, grad) in names {
        for i in (0..grad.len()).step_by((grad.len() / 7).max(1)) {
            compare(format!("{name}[{i}]"), grad[i] as f64, &|d| {
                let mut m = layer.clone();
                m.visit_mut("", &mut |n, p| {
                    if n == name {
                        p.value[i] += d;
                    }
                });
                objective(&m, &x, &probe)
            });
        }
    }
    assert!(checked >= 4 * skipped.max(1), "{checked} checked, {skipped} skipped");
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let conv = Conv2d::new(3, 4, 3, 2, 1, true, &mut rng);
    check_layer(conv, random_tensor(&mut rng, 2, 3, 7, 6), 2);
    let pointwise = Conv2d::new(3, 2, 1, 1, 0, true, &mut rng);
    check_layer(pointwise, random_tensor(&mut rng, 1, 3, 5, 5), 3);
}

#[test]
fn transposed_conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let up = ConvTranspose2d::new(3, 2, 4, 2, 1, &mut rng);
    check_layer(up, random_tensor(&mut rng, 2, 3, 4, 3), 5);
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bn = BatchNorm2d::new(3);
    bn.gamma.value = vec![0.5, 1.5, -1.0];
    bn.beta.value = vec![0.1, -0.2, 0.3];
    check_layer(bn, random_tensor(&mut rng, 2, 3, 4, 4), 7);
}

#[test]
fn residual_block_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut block = ResidualBlock::new(3, 4, 2, &mut rng);
    // a silent branch would leave half the gradients untested
    block.bn2.gamma.value.fill(0.7);
    check_layer(block, random_tensor(&mut rng, 2, 3, 6, 6), 9);
    let plain = ResidualBlock::new(3, 3, 1, &mut rng);
    check_layer(plain, random_tensor(&mut rng, 2, 3, 5, 5), 10);
}

#[test]
fn transposed_conv_doubles_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let up = ConvBn::upsample(2, 3, &mut rng);
    let y = up.forward(&random_tensor(&mut rng, 1, 2, 5, 7));
    assert_eq!(y.shape(), [1, 3, 10, 14]);
}

#[test]
fn stage_flops_are_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let stage = residual_stage(4, 8, 2, 2, &mut rng);
    let (total, oh, ow) = stage.flops(16, 16);
    let (a, h1, w1) = stage.layers[0].flops(16, 16);
    let (b, _, _) = stage.layers[1].flops(h1, w1);
    assert_eq!((total, oh, ow), (a + b, 8, 8));
    assert!(parameter_count(&stage) > 0);
}

#[test]
fn tiny_spatial_maps_have_correct_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for side in [1, 2, 3] {
        let conv = Conv2d::new(3, 2, 3, 1, 1, true, &mut rng);
        check_layer(conv, random_tensor(&mut rng, 2, 3, side, side), 14);
        let up = ConvTranspose2d::new(3, 2, 4, 2, 1, &mut rng);
        check_layer(up, random_tensor(&mut rng, 2, 3, side, side), 15);
    }
    let mut block = ResidualBlock::new(3, 4, 2, &mut rng);
    block.bn2.gamma.value.fill(0.7);
    check_layer(block, random_tensor(&mut rng, 2, 3, 4, 4), 16);
    let mut block = ResidualBlock::new(4, 4, 1, &mut rng);
    block.bn2.gamma.value.fill(0.7);
    check_layer(block, random_tensor(&mut rng, 2, 4, 2, 2), 17);
}

#[test]
fn decoder_sized_modules_have_correct_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let up = ConvBn::upsample(8, 8, &mut rng);
    check_layer(up, random_tensor(&mut rng, 2, 8, 2, 2), 19);
    for (in_c, out_c, blocks, side, seed) in [(8, 8, 2, 2, 20), (8, 4, 3, 4, 21)] {
        let mut stage = residual_stage(in_c, out_c, blocks, 1, &mut rng);
        // at zero scale a later block sits exactly on a ReLU kink in its scale
        for block in &mut stage.layers {
            block.bn2.gamma.value.fill(0.6);
        }
        check_layer(stage, random_tensor(&mut rng, 2, in_c, side, side), seed);
    }
}


