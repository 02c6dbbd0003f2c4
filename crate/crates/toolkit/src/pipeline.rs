//! End-to-end runs: estimate on the base region, design one filter per
//! channel, filter, detect, group into objects and post-filter them.

use std::time::Instant;

use irf_core::estimation_ls::estimate_ls;
use irf_core::estimation_pencil::{estimate_pencil, GramMethod};
use irf_core::harmonic_model::{HarmonicModel, ResonanceRoots};
use irf_core::irf::{
    apply_filter, design_filter, detect_with, support, DesignOptions, DetectionMask, EPolicy,
    IRFilter,
};
use irf_core::postfilters::{
    binarize_evidence, combine, connected_components, density_verdict, histogram_difference,
    track_verdicts, Component, ObjectBox, TrackState,
};
use irf_core::{Complex64, ImagePlane, ImageStack};

use crate::config::{ChannelMode, EpsilonPolicy, Estimator, PipelineConfig};
use crate::documents::{
    BoxRecord, ChannelModel, FilterDoc, FrameReport, Mode, ModelDocument, ObjectRecord, RunReport,
    Timing, FORMAT_VERSION,
};
use crate::error::{Result, ToolkitError};

/// Roots closer than this are merged before fitting.
const ROOT_MERGE: f64 = 1e-6;

struct Clock {
    enabled: bool,
    last: Instant,
    log: Vec<Timing>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            last: Instant::now(),
            log: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        if self.enabled {
            let now = Instant::now();
            self.log.push(Timing {
                stage: stage.to_string(),
                millis: (now - self.last).as_secs_f64() * 1e3,
            });
            self.last = now;
        }
    }

    fn finish(self) -> Option<Vec<Timing>> {
        self.enabled.then_some(self.log)
    }
}

/// The planes the pipeline works on.
pub fn prepare_channels(image: &ImageStack, mode: ChannelMode) -> ImageStack {
    match mode {
        ChannelMode::Gray if image.len() > 1 => ImageStack::gray(image.to_gray()),
        _ => image.clone(),
    }
}

fn base_region(plane: &ImagePlane, cfg: &PipelineConfig) -> Result<ImagePlane> {
    let r = &cfg.base_region;
    plane
        .crop(r.row, r.col, r.rows, r.cols)
        .map_err(ToolkitError::core("base region"))
}

/// Pencil lines weaker than this fraction of the strongest amplitude are
/// noise-subspace roots.
pub const WEAK_LINE: f64 = 1e-2;

/// Pencil roots worth keeping: nearly undamped and at least one frequency
/// bin (`1/n` cycles) apart, counting the constant root the filter design
/// always adds. A root that close to `z = 1` inflates the kernel.
fn resolvable_near_unit(z: &ResonanceRoots, max_log_modulus: f64, n: usize) -> ResonanceRoots {
    let one = Complex64::new(1.0, 0.0);
    let mut v = vec![one];
    v.extend(
        z.near_unit(max_log_modulus)
            .as_slice()
            .iter()
            .copied()
            .filter(|&w| w != one),
    );
    let kept = ResonanceRoots::new(v).resolvable(1.0 / n as f64);
    ResonanceRoots::new(
        kept.as_slice()
            .iter()
            .copied()
            .filter(|&w| w != one)
            .collect(),
    )
}

/// Roots of one channel's base region, with the principal singular values
/// for the pencil estimator.
pub fn estimate_roots(
    base: &ImagePlane,
    cfg: &PipelineConfig,
) -> Result<(ResonanceRoots, ResonanceRoots, Vec<f64>)> {
    let (p, q) = cfg.order;
    match cfg.estimator {
        Estimator::Ls => {
            let est = estimate_ls(base, p, q, cfg.symmetric)
                .map_err(ToolkitError::core("ls estimation"))?;
            Ok((
                est.zx.dedup(ROOT_MERGE),
                est.zy.dedup(ROOT_MERGE),
                Vec::new(),
            ))
        }
        Estimator::Pencil => {
            let est = estimate_pencil(base, p, q, cfg.split, GramMethod::Direct)
                .map_err(ToolkitError::core("pencil estimation"))?;
            let keep =
                |z: &ResonanceRoots, n: usize| resolvable_near_unit(z, cfg.max_log_modulus, n);
            let sv = est
                .singular_values
                .iter()
                .take(p.max(q) + 1)
                .copied()
                .collect();
            Ok((keep(&est.zx, base.rows()), keep(&est.zy, base.cols()), sv))
        }
    }
}

/// Model of every channel; amplitudes are those of the mean-removed base.
pub fn estimate_model(image: &ImageStack, cfg: &PipelineConfig) -> Result<ModelDocument> {
    cfg.validate_for(image.shape())?;
    let planes = prepare_channels(image, cfg.channel_mode);
    let mut channels = Vec::new();
    for (c, plane) in planes.channels().iter().enumerate() {
        let base = base_region(plane, cfg)?;
        let (zx, zy, sv) = estimate_roots(&base, cfg)?;
        if zx.is_empty() || zy.is_empty() {
            return Err(ToolkitError::Core {
                stage: "estimation",
                source: irf_core::Error::OrderExceedsRank {
                    order: cfg.order.0.max(cfg.order.1),
                    rank: 0,
                },
            });
        }
        let mean = base.mean();
        let centered = base.map(|v| v - mean);
        let (mut model, _) =
            HarmonicModel::fit(&centered, zx, zy).map_err(ToolkitError::core("model fit"))?;
        if cfg.estimator == Estimator::Pencil {
            model = model
                .prune_weak(&centered, WEAK_LINE)
                .map_err(ToolkitError::core("model fit"))?;
        }
        let mut doc = ChannelModel::new(c, &model, sv);
        doc.warnings = model
            .zero_lines(1e-9)
            .iter()
            .map(|w| w.to_string())
            .collect();
        channels.push(doc);
    }
    Ok(ModelDocument {
        format_version: FORMAT_VERSION,
        estimator: cfg.estimator,
        order: cfg.order,
        base_region: cfg.base_region,
        channels,
    })
}

/// Add a filter to every channel of `doc`, designed on the base region.
pub fn design_model(
    image: &ImageStack,
    cfg: &PipelineConfig,
    mut doc: ModelDocument,
) -> Result<ModelDocument> {
    cfg.validate_for(image.shape())?;
    doc.check_version().map_err(ToolkitError::Usage)?;
    let planes = prepare_channels(image, cfg.channel_mode);
    if planes.len() != doc.channels.len() {
        return Err(ToolkitError::Usage(format!(
            "model has {} channels, image has {}",
            doc.channels.len(),
            planes.len()
        )));
    }
    for (ch, plane) in doc.channels.iter_mut().zip(planes.channels()) {
        let model = ch.to_model().map_err(ToolkitError::Usage)?;
        let base = base_region(plane, cfg)?;
        let opts = DesignOptions {
            e_policy: EPolicy::Mean,
            project_roots: cfg.project_roots,
            dc_guard: 0.0,
            channel: ch.channel,
        };
        let design =
            design_filter(&base, &model, &opts).map_err(ToolkitError::core("filter design"))?;
        ch.warnings
            .extend(design.warnings.iter().map(|w| w.to_string()));
        ch.filter = Some(FilterDoc::from_filter(&design.filter));
    }
    Ok(doc)
}

/// Filter output per channel.
pub fn filter_image(
    image: &ImageStack,
    cfg: &PipelineConfig,
    doc: &ModelDocument,
) -> Result<Vec<ImagePlane>> {
    let filters = doc.filters().map_err(ToolkitError::Usage)?;
    let planes = prepare_channels(image, cfg.channel_mode);
    if planes.len() != filters.len() {
        return Err(ToolkitError::Usage(format!(
            "model has {} channels, image has {}",
            filters.len(),
            planes.len()
        )));
    }
    planes
        .channels()
        .iter()
        .zip(&filters)
        .map(|(p, f)| apply_filter(p, f).map_err(ToolkitError::core("filtering")))
        .collect()
}

fn detect_frame(
    image: &ImageStack,
    cfg: &PipelineConfig,
    filters: &[IRFilter],
) -> Result<(ImageStack, DetectionMask)> {
    let planes = prepare_channels(image, cfg.channel_mode);
    if planes.len() != filters.len() {
        return Err(ToolkitError::Usage(format!(
            "model has {} channels, image has {}",
            filters.len(),
            planes.len()
        )));
    }
    let filtered = planes
        .channels()
        .iter()
        .zip(filters)
        .map(|(p, f)| apply_filter(p, f).map_err(ToolkitError::core("filtering")))
        .collect::<Result<Vec<_>>>()?;
    let mask = detect_with(&filtered, filters, &planes, cfg.sigma_multiplier)
        .map_err(ToolkitError::core("detection"))?;
    Ok((planes, mask))
}

fn epsilon(policy: EpsilonPolicy, c: &nalgebra::DMatrix<f64>) -> f64 {
    match policy {
        EpsilonPolicy::Fixed(v) => v,
        EpsilonPolicy::MeanStd(k) => {
            let n = c.len().max(1) as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            mean + k * var.sqrt()
        }
    }
}

/// Histogram-difference verdict of one object on every channel.
pub fn histogram_verdict(
    planes: &ImageStack,
    comp: &Component,
    cfg: &PipelineConfig,
) -> Result<(bool, f64, Vec<String>)> {
    let h = &cfg.histogram;
    let mut parts = Vec::with_capacity(planes.len());
    let mut warnings = Vec::new();
    for plane in planes.channels() {
        let ev = histogram_difference(plane, &comp.bbox, h.extension, h.levels)
            .map_err(ToolkitError::core("histogram"))?;
        warnings.extend(ev.warnings.iter().map(|w| w.to_string()));
        parts.push(binarize_evidence(&ev.c, epsilon(h.epsilon, &ev.c)));
    }
    warnings.dedup();
    let cb = combine(&parts, h.combine.into()).map_err(ToolkitError::core("histogram"))?;
    let v = density_verdict(&cb, h.cell, h.fill);
    Ok((v.object, v.max_fill, warnings))
}

/// Undo the spread of a detection by the kernel support. A `P`-row kernel
/// flags rows `a - (P-1) + P/2 ..= b + P/2` around object rows `a..=b`;
/// components narrower than that collapse to their middle row.
pub fn localize(flagged: &ObjectBox, kernel: (usize, usize)) -> ObjectBox {
    let shrink = |lo: usize, hi: usize, p: usize| {
        let (a, b) = (lo + (p - 1) - p / 2, hi.saturating_sub(p / 2));
        if a <= b {
            (a, b)
        } else {
            let m = (lo + hi) / 2;
            (m, m)
        }
    };
    let (x0, x1) = shrink(flagged.x0, flagged.x1, kernel.0);
    let (y0, y1) = shrink(flagged.y0, flagged.y1, kernel.1);
    ObjectBox {
        x0,
        y0,
        x1,
        y1,
        ..*flagged
    }
}

/// Whether a flagged box spans the full kernel support, so it can be
/// localized to an object rather than a partial footprint.
pub fn resolved(flagged: &ObjectBox, kernel: (usize, usize)) -> bool {
    flagged.rows() >= kernel.0 && flagged.cols() >= kernel.1
}

fn localized(comp: &Component, kernel: (usize, usize)) -> Component {
    Component {
        bbox: localize(&comp.bbox, kernel),
        ..comp.clone()
    }
}

fn record(
    comp: &Component,
    flagged: &ObjectBox,
    cfg: &PipelineConfig,
    shape: (usize, usize),
) -> ObjectRecord {
    let (ext, _) = comp
        .bbox
        .extended(cfg.histogram.extension, shape.0, shape.1);
    ObjectRecord {
        flagged: BoxRecord::from(flagged),
        bbox: BoxRecord::from(&comp.bbox),
        extended: BoxRecord::from(&ext),
        area: comp.area,
        centroid: [comp.centroid.0, comp.centroid.1],
        max_fill: None,
        r: None,
        confirmed: false,
    }
}

fn ensure_model(
    image: &ImageStack,
    cfg: &PipelineConfig,
    model: Option<ModelDocument>,
    clock: &mut Clock,
) -> Result<ModelDocument> {
    let doc = match model {
        Some(d) => d,
        None => {
            let d = estimate_model(image, cfg)?;
            clock.lap("estimate");
            d
        }
    };
    if doc.channels.iter().all(|c| c.filter.is_some()) {
        return Ok(doc);
    }
    let d = design_model(image, cfg, doc)?;
    clock.lap("design");
    Ok(d)
}

fn model_warnings(doc: &ModelDocument) -> Vec<String> {
    doc.channels
        .iter()
        .flat_map(|c| {
            c.warnings
                .iter()
                .map(move |w| format!("channel {}: {w}", c.channel))
        })
        .collect()
}

/// Result of a single-image run.
#[derive(Debug, Clone)]
pub struct StaticRun {
    pub report: RunReport,
    pub mask: DetectionMask,
}

pub fn run_static(
    image: &ImageStack,
    cfg: &PipelineConfig,
    model: Option<ModelDocument>,
) -> Result<StaticRun> {
    cfg.validate_for(image.shape())?;
    let mut clock = Clock::new(cfg.timings);
    let doc = ensure_model(image, cfg, model, &mut clock)?;
    let filters = doc.filters().map_err(ToolkitError::Usage)?;
    let (planes, mask) = detect_frame(image, cfg, &filters)?;
    clock.lap("detect");
    let mut warnings = model_warnings(&doc);
    let mut objects = Vec::new();
    let kernel = support(&filters);
    for raw in connected_components(&mask.flags, cfg.min_area) {
        let comp = localized(&raw, kernel);
        let mut rec = record(&comp, &raw.bbox, cfg, image.shape());
        if !resolved(&raw.bbox, kernel) {
            objects.push(rec);
            continue;
        }
        match histogram_verdict(&planes, &comp, cfg) {
            Ok((ok, fill, w)) => {
                rec.confirmed = ok;
                rec.max_fill = Some(fill);
                for w in w {
                    warnings.push(format!(
                        "object at ({}, {}): {w}",
                        comp.bbox.x0, comp.bbox.y0
                    ));
                }
            }
            // an object covering the whole image has no ring to compare with
            Err(ToolkitError::Core {
                source: irf_core::Error::EmptyRing,
                ..
            }) => {
                warnings.push(format!(
                    "object at ({}, {}): no background ring",
                    comp.bbox.x0, comp.bbox.y0
                ));
            }
            Err(e) => return Err(e),
        }
        objects.push(rec);
    }
    clock.lap("postfilter");
    let report = RunReport {
        format_version: FORMAT_VERSION,
        mode: Mode::Static,
        config: cfg.clone(),
        model: doc,
        frames: vec![FrameReport {
            frame_index: 0,
            flagged_pixels: mask.count(),
            objects,
        }],
        warnings,
        timings: clock.finish(),
    };
    Ok(StaticRun { report, mask })
}

/// Result of a frame-sequence run.
#[derive(Debug, Clone)]
pub struct TrackRun {
    pub report: RunReport,
    pub masks: Vec<DetectionMask>,
}

/// The model and filters come from the first frame's base region. An
/// object gets a correlation verdict once the frame window is full.
pub fn run_tracking(
    frames: &[ImageStack],
    cfg: &PipelineConfig,
    model: Option<ModelDocument>,
) -> Result<TrackRun> {
    let first = frames
        .first()
        .ok_or_else(|| ToolkitError::Usage("no frames given".into()))?;
    cfg.validate_for(first.shape())?;
    if let Some(f) = frames
        .iter()
        .find(|f| f.shape() != first.shape() || f.len() != first.len())
    {
        return Err(ToolkitError::Usage(format!(
            "frame of shape {:?} differs from {:?}",
            f.shape(),
            first.shape()
        )));
    }
    let mut clock = Clock::new(cfg.timings);
    let doc = ensure_model(first, cfg, model, &mut clock)?;
    let filters = doc.filters().map_err(ToolkitError::Usage)?;
    let mut track = TrackState::new(cfg.tracking.window, cfg.tracking.r_threshold)
        .map_err(ToolkitError::core("tracking"))?;
    let mut reports = Vec::new();
    let mut masks = Vec::new();
    for (t, frame) in frames.iter().enumerate() {
        let (_, mask) = detect_frame(frame, cfg, &filters)?;
        track
            .push_detection(&mask, cfg.min_area)
            .map_err(ToolkitError::core("tracking"))?;
        let comps = connected_components(&mask.flags, cfg.min_area);
        let kernel = support(&filters);
        let mut objects: Vec<ObjectRecord> = comps
            .iter()
            .map(|c| record(&localized(c, kernel), &c.bbox, cfg, frame.shape()))
            .collect();
        if track.is_full() {
            let verdicts = track_verdicts(&track, cfg.histogram.extension)
                .map_err(ToolkitError::core("tracking"))?;
            for (rec, v) in objects.iter_mut().zip(verdicts) {
                rec.r = Some(v.r);
                rec.confirmed = v.confirmed;
            }
        }
        reports.push(FrameReport {
            frame_index: t,
            flagged_pixels: mask.count(),
            objects,
        });
        masks.push(mask);
        clock.lap("frame");
    }
    let report = RunReport {
        format_version: FORMAT_VERSION,
        mode: Mode::Tracking,
        config: cfg.clone(),
        warnings: model_warnings(&doc),
        model: doc,
        frames: reports,
        timings: clock.finish(),
    };
    Ok(TrackRun { report, masks })
}
