//! Pipeline configuration and its validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use irf_core::irf::SIGMA_MULTIPLIER;
use irf_core::postfilters::{
    Combine, DEFAULT_CELL, DEFAULT_EPSILON, DEFAULT_EXTENSION, DEFAULT_FILL, DEFAULT_LEVELS,
    DEFAULT_R_THRESHOLD, DEFAULT_WINDOW,
};

/// Training rectangle: top-left `(row, col)` and size `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            row: 0,
            col: 0,
            rows: 64,
            cols: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Ls,
    Pencil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Average color channels into one plane.
    Gray,
    /// Every stored channel on its own (a PGM has one).
    #[default]
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum EpsilonPolicy {
    Fixed(f64),
    /// `mean(C) + k * std(C)` over the box.
    MeanStd(f64),
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self::Fixed(DEFAULT_EPSILON)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CombineRule {
    #[default]
    Or,
    And,
}

impl From<CombineRule> for Combine {
    fn from(c: CombineRule) -> Self {
        match c {
            CombineRule::Or => Combine::Or,
            CombineRule::And => Combine::And,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramParams {
    pub extension: usize,
    pub levels: usize,
    pub epsilon: EpsilonPolicy,
    pub cell: usize,
    pub fill: f64,
    pub combine: CombineRule,
}

impl Default for HistogramParams {
    fn default() -> Self {
        Self {
            extension: DEFAULT_EXTENSION,
            levels: DEFAULT_LEVELS,
            epsilon: EpsilonPolicy::default(),
            cell: DEFAULT_CELL,
            fill: DEFAULT_FILL,
            combine: CombineRule::Or,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingParams {
    pub window: usize,
    pub r_threshold: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            r_threshold: DEFAULT_R_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub base_region: Region,
    pub order: (usize, usize),
    pub estimator: Estimator,
    /// Palindromic (linear symmetry) fit for the LS estimator.
    pub symmetric: bool,
    /// Pencil splitting parameter; `None` picks `min(M, N) / 3`.
    pub split: Option<usize>,
    /// Pencil roots with `|ln|z||` above this are discarded as noise modes.
    pub max_log_modulus: f64,
    pub project_roots: bool,
    pub channel_mode: ChannelMode,
    pub sigma_multiplier: f64,
    pub min_area: usize,
    pub histogram: HistogramParams,
    pub tracking: TrackingParams,
    pub seed: u64,
    /// Record stage timings in the report (makes reports non-reproducible).
    pub timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            base_region: Region::default(),
            order: (16, 16),
            estimator: Estimator::Ls,
            symmetric: true,
            split: None,
            max_log_modulus: 0.02,
            project_roots: true,
            channel_mode: ChannelMode::Rgb,
            sigma_multiplier: SIGMA_MULTIPLIER,
            min_area: 4,
            histogram: HistogramParams::default(),
            tracking: TrackingParams::default(),
            seed: irf_core::harmonic_model::DEFAULT_SEED,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("base_region: {0}")]
    BaseRegion(String),
    #[error("order: {0}")]
    Order(String),
    #[error("split: {0}")]
    Split(String),
    #[error("max_log_modulus must be positive and finite, got {0}")]
    MaxLogModulus(f64),
    #[error("sigma_multiplier must be positive and finite, got {0}")]
    SigmaMultiplier(f64),
    #[error("min_area must be at least 1")]
    MinArea,
    #[error("histogram.levels must be in 1..=65536, got {0}")]
    Levels(usize),
    #[error("histogram.epsilon must be finite, got {0}")]
    Epsilon(f64),
    #[error("histogram.cell must be at least 1")]
    Cell,
    #[error("histogram.fill must be in [0, 1], got {0}")]
    Fill(f64),
    #[error("tracking.window must be at least 1")]
    Window,
    #[error("tracking.r_threshold must be in [0, 1], got {0}")]
    RThreshold(f64),
}

impl PipelineConfig {
    /// Checks that need no image.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.base_region;
        if r.rows == 0 || r.cols == 0 {
            return Err(ConfigError::BaseRegion(format!(
                "empty {}x{} region",
                r.rows, r.cols
            )));
        }
        let (p, q) = self.order;
        if p == 0 || q == 0 {
            return Err(ConfigError::Order(format!("{p}x{q} has a zero side")));
        }
        if p >= r.rows || q >= r.cols {
            return Err(ConfigError::Order(format!(
                "{p}x{q} does not fit the {}x{} base region",
                r.rows, r.cols
            )));
        }
        if self.estimator == Estimator::Ls && self.symmetric && (p % 2 != 0 || q % 2 != 0) {
            return Err(ConfigError::Order(format!(
                "{p}x{q}: the symmetric fit needs even orders"
            )));
        }
        if self.estimator == Estimator::Pencil {
            let lo = r.rows.min(r.cols);
            let pm = p.max(q);
            let (min, max) = (pm.max(2), lo.saturating_sub(2));
            let split = self.split.unwrap_or_else(|| {
                irf_core::estimation_pencil::default_split((r.rows, r.cols), pm)
            });
            if split < min || split > max || (split - 1) * (split - 1) < pm {
                return Err(ConfigError::Split(format!(
                    "{split} outside {min}..={max} for order {pm}"
                )));
            }
        }
        if !(self.max_log_modulus > 0.0 && self.max_log_modulus.is_finite()) {
            return Err(ConfigError::MaxLogModulus(self.max_log_modulus));
        }
        if !(self.sigma_multiplier > 0.0 && self.sigma_multiplier.is_finite()) {
            return Err(ConfigError::SigmaMultiplier(self.sigma_multiplier));
        }
        if self.min_area == 0 {
            return Err(ConfigError::MinArea);
        }
        let h = &self.histogram;
        if h.levels == 0 || h.levels > 65536 {
            return Err(ConfigError::Levels(h.levels));
        }
        match h.epsilon {
            EpsilonPolicy::Fixed(v) | EpsilonPolicy::MeanStd(v) if !v.is_finite() => {
                return Err(ConfigError::Epsilon(v))
            }
            _ => {}
        }
        if h.cell == 0 {
            return Err(ConfigError::Cell);
        }
        if !(0.0..=1.0).contains(&h.fill) {
            return Err(ConfigError::Fill(h.fill));
        }
        if self.tracking.window == 0 {
            return Err(ConfigError::Window);
        }
        if !(0.0..=1.0).contains(&self.tracking.r_threshold) {
            return Err(ConfigError::RThreshold(self.tracking.r_threshold));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the base region fitting the image.
    pub fn validate_for(&self, shape: (usize, usize)) -> Result<(), ConfigError> {
        self.validate()?;
        let r = &self.base_region;
        if r.row + r.rows > shape.0 || r.col + r.cols > shape.1 {
            return Err(ConfigError::BaseRegion(format!(
                "{}x{} at ({}, {}) leaves the {}x{} image",
                r.rows, r.cols, r.row, r.col, shape.0, shape.1
            )));
        }
        Ok(())
    }
}
