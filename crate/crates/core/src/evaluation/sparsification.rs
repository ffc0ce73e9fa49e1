use serde::{Deserialize, Serialize};

use crate::domain::{ensure_same_shape, AlphaMatte, UncertaintyMap};
use crate::error::{Error, Result};

/// Remaining MSE after discarding growing fractions of pixels, ranked either by
/// predicted uncertainty or by the true error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurve {
    pub fractions: Vec<f64>,
    pub mse_remaining_predicted: Vec<f64>,
    pub mse_remaining_oracle: Vec<f64>,
}

impl SparsificationCurve {
    /// Relative MSE reduction of the predicted ranking at `fractions[index]`.
    pub fn predicted_reduction(&self, index: usize) -> f64 {
        let full = self.mse_remaining_predicted[0];
        if full == 0.0 {
            return 0.0;
        }
        1.0 - self.mse_remaining_predicted[index] / full
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,mse_predicted,mse_oracle\n");
        for i in 0..self.fractions.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.fractions[i], self.mse_remaining_predicted[i], self.mse_remaining_oracle[i]
            ));
        }
        out
    }

    /// Pointwise mean of curves sharing the same fractions.
    pub fn mean(curves: &[SparsificationCurve]) -> Option<SparsificationCurve> {
        let first = curves.first()?;
        let n = curves.len() as f64;
        let avg = |pick: fn(&SparsificationCurve) -> &Vec<f64>| {
            (0..first.fractions.len())
                .map(|i| curves.iter().map(|c| pick(c)[i]).sum::<f64>() / n)
                .collect()
        };
        Some(SparsificationCurve {
            fractions: first.fractions.clone(),
            mse_remaining_predicted: avg(|c| &c.mse_remaining_predicted),
            mse_remaining_oracle: avg(|c| &c.mse_remaining_oracle),
        })
    }
}

/// Number of pixels removed at fraction `f` of `n`.
pub fn removed_count(f: f64, n: usize) -> usize {
    (f * n as f64 + 1e-9).floor() as usize
}

/// Indices sorted by descending key, earlier pixels first on ties.
fn ranking(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    order
}

fn remaining_mse(sq: &[f64], order: &[usize], removed: usize) -> f64 {
    let rest = &order[removed..];
    rest.iter().map(|&i| sq[i]).sum::<f64>() / rest.len() as f64
}

pub fn sparsification(
    alpha_p: &AlphaMatte,
    alpha_g: &AlphaMatte,
    sigma_p: &UncertaintyMap,
    fractions: &[f64],
) -> Result<SparsificationCurve> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    ensure_same_shape(alpha_p.shape(), sigma_p.shape())?;
    if fractions.first() != Some(&0.0) {
        return Err(Error::Invalid("fractions must start at 0".into()));
    }
    if fractions.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("fractions must be sorted ascending".into()));
    }
    let n = alpha_p.data().len();
    if let Some(&f) = fractions.iter().find(|&&f| f >= 1.0 || removed_count(f, n) >= n) {
        return Err(Error::Invalid(format!("fraction {f} leaves no pixels")));
    }
    let sq: Vec<f64> = alpha_p
        .data()
        .iter()
        .zip(alpha_g.data())
        .map(|(&p, &g)| (p as f64 - g as f64).powi(2))
        .collect();
    let by_sigma = ranking(&sigma_p.data().iter().map(|&s| s as f64).collect::<Vec<_>>());
    let by_error = ranking(&sq);
    let mut curve = SparsificationCurve {
        fractions: fractions.to_vec(),
        mse_remaining_predicted: Vec::with_capacity(fractions.len()),
        mse_remaining_oracle: Vec::with_capacity(fractions.len()),
    };
    for &f in fractions {
        let k = removed_count(f, n);
        curve.mse_remaining_predicted.push(remaining_mse(&sq, &by_sigma, k));
        curve.mse_remaining_oracle.push(remaining_mse(&sq, &by_error, k));
    }
    Ok(curve)
}
