//! Value types shared by every stage of the pipeline.
//!
//! All fields are row-major with the origin at the top-left pixel and
//! coordinates given as `(row, col)`. Values are immutable once built; the
//! checked constructors enforce each type's invariants, and [`Validate`]
//! reports violations on values built through the unchecked paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on every predicted Laplace scale.
pub const SIGMA_FLOOR: f32 = 1e-4;

/// Default click disk radius in pixels.
pub const DEFAULT_CLICK_RADIUS: u32 = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, invariant: &str) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn push(&mut self, invariant: &'static str, detail: impl Into<String>) {
        self.violations.push(Violation {
            invariant,
            detail: detail.into(),
        });
    }

    fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Invalid(format!("{}: {}", v.invariant, v.detail))),
        }
    }
}

/// Invariant check for a domain value; never fails, only reports.
pub trait Validate {
    fn validate(&self) -> ValidationReport;
}

fn check_dims(report: &mut ValidationReport, height: usize, width: usize, len: usize, per_px: usize) {
    if height == 0 || width == 0 {
        report.push("shape", format!("{height}x{width} has an empty side"));
    }
    if height * width * per_px != len {
        report.push(
            "shape",
            format!("{height}x{width}x{per_px} does not match {len} values"),
        );
    }
}

/// Observed RGB composite, interleaved `[r, g, b]` per pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// Builds an image, clamping values into `[0, 1]`. Non-finite values are rejected.
    pub fn new(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("image contains non-finite values".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        let image = Self { height, width, data };
        image.validate().into_result()?;
        Ok(image)
    }

    pub fn from_raw_unchecked(height: usize, width: usize, data: Vec<f32>) -> Self {
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Copies the window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        let mut data = Vec::with_capacity(height * width * 3);
        for r in top..top + height {
            let start = (r * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Image::from_raw_unchecked(height, width, data)
    }
}

impl Validate for Image {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        check_dims(&mut report, self.height, self.width, self.data.len(), 3);
        if self.data.iter().any(|v| !v.is_finite()) {
            report.push("finite", "image contains non-finite values");
        } else if self.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            report.push("range", "image value outside [0, 1]");
        }
        report
    }
}

/// Per-pixel opacity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl AlphaMatte {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let matte = Self { height, width, data };
        matte.validate().into_result()?;
        Ok(matte)
    }

    pub fn from_raw_unchecked(height: usize, width: usize, data: Vec<f32>) -> Self {
        Self { height, width, data }
    }

    /// Clamps arbitrary finite values into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, data: Vec<f32>) -> Self {
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> AlphaMatte {
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        AlphaMatte::from_raw_unchecked(height, width, data)
    }
}

impl Validate for AlphaMatte {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        check_dims(&mut report, self.height, self.width, self.data.len(), 1);
        if self.data.iter().any(|v| !v.is_finite()) {
            report.push("finite", "alpha contains non-finite values");
        } else if let Some(v) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            report.push("range", format!("alpha value {v} outside [0, 1]"));
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Region {
    Foreground = 0,
    Background = 1,
    Transition = 2,
}

/// Labels every pixel as exactly one of foreground, background or transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    height: usize,
    width: usize,
    labels: Vec<Region>,
}

impl RegionPartition {
    pub fn new(height: usize, width: usize, labels: Vec<Region>) -> Result<Self> {
        let partition = Self {
            height,
            width,
            labels,
        };
        partition.validate().into_result()?;
        Ok(partition)
    }

    pub fn filled(height: usize, width: usize, region: Region) -> Self {
        Self {
            height,
            width,
            labels: vec![region; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|&&r| r == region).count()
    }

    pub fn mask(&self, region: Region) -> Vec<bool> {
        self.labels.iter().map(|&r| r == region).collect()
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> RegionPartition {
        let mut labels = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            labels.extend_from_slice(&self.labels[start..start + width]);
        }
        RegionPartition {
            height,
            width,
            labels,
        }
    }
}

impl Validate for RegionPartition {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        check_dims(&mut report, self.height, self.width, self.labels.len(), 1);
        let total = self.count(Region::Foreground)
            + self.count(Region::Background)
            + self.count(Region::Transition);
        if total != self.height * self.width {
            report.push("partition", format!("{total} labels for {} pixels", self.height * self.width));
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "fg")]
    Foreground,
    #[serde(rename = "bg")]
    Background,
}

impl Polarity {
    pub fn hint_value(self) -> f32 {
        match self {
            Polarity::Foreground => 1.0,
            Polarity::Background => -1.0,
        }
    }
}

/// One user click. Serializes to the shared wire form `{"row","col","polarity","i"}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickPoint {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    #[serde(rename = "i")]
    pub sequence_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickSet {
    clicks: Vec<ClickPoint>,
    radius: u32,
}

impl Default for ClickSet {
    fn default() -> Self {
        Self::empty(DEFAULT_CLICK_RADIUS)
    }
}

impl ClickSet {
    pub fn empty(radius: u32) -> Self {
        Self {
            clicks: Vec::new(),
            radius,
        }
    }

    /// Sorts the clicks by sequence index; duplicate indices or `radius == 0` are rejected.
    pub fn new(mut clicks: Vec<ClickPoint>, radius: u32) -> Result<Self> {
        clicks.sort_by_key(|c| c.sequence_index);
        let set = Self { clicks, radius };
        set.validate().into_result()?;
        Ok(set)
    }

    pub fn clicks(&self) -> &[ClickPoint] {
        &self.clicks
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn next_index(&self) -> u32 {
        self.clicks.last().map_or(0, |c| c.sequence_index + 1)
    }

    /// Appends a click with the next free sequence index.
    pub fn push(&mut self, row: usize, col: usize, polarity: Polarity) -> ClickPoint {
        let click = ClickPoint {
            row,
            col,
            polarity,
            sequence_index: self.next_index(),
        };
        self.clicks.push(click);
        click
    }

    pub fn pop(&mut self) -> Option<ClickPoint> {
        self.clicks.pop()
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        for (index, c) in self.clicks.iter().enumerate() {
            if c.row >= height || c.col >= width {
                return Err(Error::ClickOutOfBounds {
                    index,
                    row: c.row,
                    col: c.col,
                    height,
                    width,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.clicks).expect("click serialization is infallible")
    }

    pub fn from_json(json: &str, radius: u32) -> Result<Self> {
        let clicks: Vec<ClickPoint> = serde_json::from_str(json)?;
        Self::new(clicks, radius)
    }
}

impl Validate for ClickSet {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.radius < 1 {
            report.push("radius", "click radius must be at least 1");
        }
        if self
            .clicks
            .windows(2)
            .any(|w| w[0].sequence_index >= w[1].sequence_index)
        {
            report.push("sequence", "sequence indices must be unique and ascending");
        }
        report
    }
}

/// One-channel click hints: `+1` foreground disks, `-1` background disks, `0` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct HintMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl HintMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let map = Self { height, width, data };
        map.validate().into_result()?;
        Ok(map)
    }

    pub fn from_raw_unchecked(height: usize, width: usize, data: Vec<f32>) -> Self {
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

impl Validate for HintMap {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        check_dims(&mut report, self.height, self.width, self.data.len(), 1);
        if let Some(v) = self
            .data
            .iter()
            .find(|&&v| v != -1.0 && v != 0.0 && v != 1.0)
        {
            report.push("value set", format!("hint value {v} not in {{-1, 0, 1}}"));
        }
        report
    }
}

/// Per-pixel Laplace scale of the predicted alpha; every value is at least [`SIGMA_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl UncertaintyMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let map = Self { height, width, data };
        map.validate().into_result()?;
        Ok(map)
    }

    pub fn from_raw_unchecked(height: usize, width: usize, data: Vec<f32>) -> Self {
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl Validate for UncertaintyMap {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        check_dims(&mut report, self.height, self.width, self.data.len(), 1);
        if self.data.iter().any(|v| !v.is_finite()) {
            report.push("finite", "sigma contains non-finite values");
        } else if let Some(v) = self.data.iter().find(|&&v| v < SIGMA_FLOOR) {
            report.push("floor", format!("sigma {v} below floor {SIGMA_FLOOR}"));
        }
        report
    }
}

pub fn ensure_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}
