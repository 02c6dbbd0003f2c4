//! Versioned JSON documents: the model (roots, amplitudes, filters) and the
//! run report. Complex numbers are `[re, im]` pairs, matrices are row-major.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use irf_core::harmonic_model::{HarmonicModel, ResonanceRoots};
use irf_core::irf::IRFilter;
use irf_core::postfilters::ObjectBox;
use irf_core::Complex64;

use crate::config::{Estimator, PipelineConfig, Region};

pub const FORMAT_VERSION: u32 = 1;

pub type Pair = [f64; 2];

fn pairs(v: &[Complex64]) -> Vec<Pair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(v: &[Pair]) -> Vec<Complex64> {
    v.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major kernel.
    pub kernel: Vec<f64>,
    pub e: f64,
    pub sigma2: f64,
}

impl FilterDoc {
    pub fn from_filter(f: &IRFilter) -> Self {
        let (rows, cols) = f.h.shape();
        let kernel = (0..rows)
            .flat_map(|i| (0..cols).map(move |k| (i, k)))
            .map(|(i, k)| f.h[(i, k)])
            .collect();
        Self {
            rows,
            cols,
            kernel,
            e: f.e,
            sigma2: f.sigma2,
        }
    }

    pub fn to_filter(&self, channel: usize) -> Result<IRFilter, String> {
        if self.rows * self.cols != self.kernel.len() || self.kernel.is_empty() {
            return Err(format!(
                "kernel has {} values for {}x{}",
                self.kernel.len(),
                self.rows,
                self.cols
            ));
        }
        let h = DMatrix::from_row_slice(self.rows, self.cols, &self.kernel);
        let mut f = IRFilter::from_kernel(h, self.e, channel).map_err(|e| e.to_string())?;
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(format!("invalid sigma2 {}", self.sigma2));
        }
        f.sigma2 = self.sigma2;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub channel: usize,
    pub zx: Vec<Pair>,
    pub zy: Vec<Pair>,
    pub dampings_x: Vec<f64>,
    pub dampings_y: Vec<f64>,
    /// `len(zx) x len(zy)` amplitudes of the mean-removed base region.
    pub amplitudes: Vec<Pair>,
    /// Principal singular values (pencil estimator only).
    pub singular_values: Vec<f64>,
    pub filter: Option<FilterDoc>,
    pub warnings: Vec<String>,
}

impl ChannelModel {
    pub fn new(channel: usize, model: &HarmonicModel, singular_values: Vec<f64>) -> Self {
        let (p, q) = model.amplitudes.shape();
        let amplitudes = (0..p)
            .flat_map(|m| (0..q).map(move |n| (m, n)))
            .map(|(m, n)| {
                let a = model.amplitudes[(m, n)];
                [a.re, a.im]
            });
        Self {
            channel,
            zx: pairs(model.zx.as_slice()),
            zy: pairs(model.zy.as_slice()),
            dampings_x: model.zx.dampings(),
            dampings_y: model.zy.dampings(),
            amplitudes: amplitudes.collect(),
            singular_values,
            filter: None,
            warnings: Vec::new(),
        }
    }

    pub fn to_model(&self) -> Result<HarmonicModel, String> {
        let (p, q) = (self.zx.len(), self.zy.len());
        if self.amplitudes.len() != p * q {
            return Err(format!(
                "{} amplitudes for {p}x{q} roots",
                self.amplitudes.len()
            ));
        }
        let a = DMatrix::from_row_slice(p, q, &complexes(&self.amplitudes));
        HarmonicModel::new(
            ResonanceRoots::new(complexes(&self.zx)),
            ResonanceRoots::new(complexes(&self.zy)),
            a,
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub estimator: Estimator,
    pub order: (usize, usize),
    pub base_region: Region,
    pub channels: Vec<ChannelModel>,
}

impl ModelDocument {
    pub fn check_version(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported model format_version {}",
                self.format_version
            ));
        }
        Ok(())
    }

    pub fn filters(&self) -> Result<Vec<IRFilter>, String> {
        self.channels
            .iter()
            .map(|c| {
                c.filter
                    .as_ref()
                    .ok_or_else(|| {
                        format!("channel {} has no filter; run `design` first", c.channel)
                    })?
                    .to_filter(c.channel)
            })
            .collect()
    }
}

/// Inclusive box, `x` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl From<&ObjectBox> for BoxRecord {
    fn from(b: &ObjectBox) -> Self {
        Self {
            x0: b.x0,
            y0: b.y0,
            x1: b.x1,
            y1: b.y1,
        }
    }
}

impl BoxRecord {
    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    /// Object box: the flagged component with the kernel spread removed.
    #[serde(rename = "box")]
    pub bbox: BoxRecord,
    /// Bounding box of the flagged pixels.
    pub flagged: BoxRecord,
    /// Box grown by the ring width, clipped to the image.
    pub extended: BoxRecord,
    pub area: usize,
    pub centroid: Pair,
    /// Largest cell fill of the histogram evidence (static mode; absent for
    /// components narrower than the kernel support).
    pub max_fill: Option<f64>,
    /// Binary correlation over the frame window (tracking mode).
    pub r: Option<f64>,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_index: usize,
    pub flagged_pixels: usize,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub mode: Mode,
    pub config: PipelineConfig,
    pub model: ModelDocument,
    pub frames: Vec<FrameReport>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<Timing>>,
}

impl RunReport {
    pub fn confirmed(&self) -> impl Iterator<Item = &ObjectRecord> {
        self.frames
            .iter()
            .flat_map(|f| f.objects.iter())
            .filter(|o| o.confirmed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let r: Self = serde_json::from_str(s).map_err(|e| e.to_string())?;
        if r.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported report format_version {}",
                r.format_version
            ));
        }
        Ok(r)
    }
}
