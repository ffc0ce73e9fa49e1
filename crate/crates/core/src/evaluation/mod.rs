//! Matting metrics and the sparsification analysis of predicted uncertainty.
//!
//! Metrics are computed unscaled over a boolean region mask. Reporting scales
//! (SAD x1e2, MSE x1e3, Grad x1e5, Conn x1e3) are applied only by
//! [`MetricReport::scaled`].

mod conn;
mod gradient;
mod sparsification;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use conn::conn_metric;
pub use gradient::{gaussian_gradient, grad_metric};
pub use sparsification::{sparsification, SparsificationCurve};

use crate::domain::{ensure_same_shape, AlphaMatte, Region, RegionPartition};
use crate::error::{Error, Result};

pub(crate) fn check_inputs(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, mask: &[bool]) -> Result<()> {
    ensure_same_shape(alpha_p.shape(), alpha_g.shape())?;
    if mask.len() != alpha_p.data().len() {
        return Err(Error::ShapeMismatch {
            expected: alpha_p.shape(),
            actual: (1, mask.len()),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyRegion("metric mask"));
    }
    Ok(())
}

fn masked_errors<'a>(
    alpha_p: &'a AlphaMatte,
    alpha_g: &'a AlphaMatte,
    mask: &'a [bool],
) -> impl Iterator<Item = f64> + 'a {
    alpha_p
        .data()
        .iter()
        .zip(alpha_g.data())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &g), _)| p as f64 - g as f64)
}

/// Sum of absolute differences over the mask.
pub fn sad(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
    check_inputs(alpha_p, alpha_g, mask)?;
    Ok(masked_errors(alpha_p, alpha_g, mask).map(f64::abs).sum())
}

/// Mean squared difference over the mask.
pub fn mse(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
    check_inputs(alpha_p, alpha_g, mask)?;
    let n = mask.iter().filter(|&&m| m).count() as f64;
    Ok(masked_errors(alpha_p, alpha_g, mask).map(|e| e * e).sum::<f64>() / n)
}

/// A named matting metric with its reporting scale.
pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;
    /// Multiplier applied when formatting reports.
    fn scale(&self) -> f64;
    fn compute(&self, alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, mask: &[bool]) -> Result<f64>;
}

struct Sad;
struct Mse;
struct Grad;
struct Conn {
    step: f64,
}

impl Metric for Sad {
    fn name(&self) -> &'static str {
        "sad"
    }
    fn scale(&self) -> f64 {
        1e2
    }
    fn compute(&self, p: &AlphaMatte, g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
        sad(p, g, mask)
    }
}

impl Metric for Mse {
    fn name(&self) -> &'static str {
        "mse"
    }
    fn scale(&self) -> f64 {
        1e3
    }
    fn compute(&self, p: &AlphaMatte, g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
        mse(p, g, mask)
    }
}

impl Metric for Grad {
    fn name(&self) -> &'static str {
        "grad"
    }
    fn scale(&self) -> f64 {
        1e5
    }
    fn compute(&self, p: &AlphaMatte, g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
        grad_metric(p, g, mask)
    }
}

impl Metric for Conn {
    fn name(&self) -> &'static str {
        "conn"
    }
    fn scale(&self) -> f64 {
        1e3
    }
    fn compute(&self, p: &AlphaMatte, g: &AlphaMatte, mask: &[bool]) -> Result<f64> {
        conn_metric(p, g, mask, self.step)
    }
}

/// Metrics selectable by name.
pub struct MetricRegistry {
    metrics: Vec<Box<dyn Metric>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(Sad));
        registry.register(Box::new(Mse));
        registry.register(Box::new(Grad));
        registry.register(Box::new(Conn { step: 0.1 }));
        registry
    }
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self { metrics: Vec::new() }
    }

    /// Adds a metric, replacing any previous one with the same name.
    pub fn register(&mut self, metric: Box<dyn Metric>) {
        self.metrics.retain(|m| m.name() != metric.name());
        self.metrics.push(metric);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Metric> {
        self.metrics.iter().find(|m| m.name() == name).map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.metrics.iter().map(|m| m.name()).collect()
    }

    /// Keeps only the named metrics, in the given order.
    pub fn select(mut self, names: &[&str]) -> Result<Self> {
        let mut picked = Vec::with_capacity(names.len());
        for name in names {
            let idx = self
                .metrics
                .iter()
                .position(|m| m.name() == *name)
                .ok_or_else(|| Error::Invalid(format!("unknown metric {name}; known: {:?}", self.names())))?;
            picked.push(self.metrics.remove(idx));
        }
        Ok(Self { metrics: picked })
    }

    pub fn evaluate(
        &self,
        alpha_p: &AlphaMatte,
        alpha_g: &AlphaMatte,
        partition: &RegionPartition,
        scope: Scope,
    ) -> Result<MetricReport> {
        ensure_same_shape(alpha_p.shape(), partition.shape())?;
        let mask = scope.mask(partition);
        let mut values = BTreeMap::new();
        let mut scales = BTreeMap::new();
        for metric in &self.metrics {
            values.insert(metric.name().to_string(), metric.compute(alpha_p, alpha_g, &mask)?);
            scales.insert(metric.name().to_string(), metric.scale());
        }
        Ok(MetricReport {
            scope,
            pixels: mask.iter().filter(|&&m| m).count(),
            values,
            scales,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Full,
    Transition,
}

impl Scope {
    pub fn mask(self, partition: &RegionPartition) -> Vec<bool> {
        match self {
            Scope::Full => vec![true; partition.labels().len()],
            Scope::Transition => partition.mask(Region::Transition),
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scope::Full),
            "transition" => Ok(Scope::Transition),
            other => Err(Error::Invalid(format!("unknown scope {other}"))),
        }
    }
}

/// Raw metric values for one image (or a mean over images).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scope: Scope,
    pub pixels: usize,
    pub values: BTreeMap<String, f64>,
    pub scales: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// SAD divided by the number of evaluated pixels in thousands.
    pub fn sad_per_kilopixel(&self) -> Option<f64> {
        self.get("sad").map(|s| s * 1000.0 / self.pixels as f64)
    }

    /// Values multiplied by their reporting scales.
    pub fn scaled(&self) -> BTreeMap<String, f64> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), v * self.scales.get(k).copied().unwrap_or(1.0)))
            .collect()
    }

    /// Per-metric mean over reports sharing the same metrics and scope.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let mut out = first.clone();
        for (name, v) in out.values.iter_mut() {
            *v = reports.iter().map(|r| r.values[name]).sum::<f64>() / n;
        }
        out.pixels = reports.iter().map(|r| r.pixels).sum::<usize>() / reports.len();
        Some(out)
    }

    /// `id,scope,pixels,<name>,<name>_scaled,...,sad_per_kpx`, matching [`Self::csv_row`].
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["id".to_string(), "scope".into(), "pixels".into()];
        for name in self.values.keys() {
            cols.push(name.clone());
            cols.push(format!("{name}_scaled"));
        }
        cols.push("sad_per_kpx".into());
        cols.join(",")
    }

    pub fn csv_row(&self, id: &str) -> String {
        let scaled = self.scaled();
        let mut cols = vec![
            id.to_string(),
            serde_json::to_value(self.scope).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            self.pixels.to_string(),
        ];
        for (name, v) in &self.values {
            cols.push(format!("{v}"));
            cols.push(format!("{}", scaled[name]));
        }
        cols.push(self.sad_per_kilopixel().map(|v| v.to_string()).unwrap_or_default());
        cols.join(",")
    }
}
