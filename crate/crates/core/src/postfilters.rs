//! False-detection removal: connected components, histogram-difference
//! evidence for static scenes and binary correlation across frames for
//! dynamic ones.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::irf::DetectionMask;
use crate::{BinaryRaster, Error, ImagePlane, Result, Warning};

/// Ring width around an object box.
pub const DEFAULT_EXTENSION: usize = 7;
pub const DEFAULT_LEVELS: usize = 256;
/// Rows drawn from one distribution give `C` near `1/n` on the diagonal and
/// near zero elsewhere; a shifted level gives `C` of order one.
pub const DEFAULT_EPSILON: f64 = 0.25;
pub const DEFAULT_CELL: usize = 5;
pub const DEFAULT_FILL: f64 = 0.75;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_R_THRESHOLD: f64 = 0.3;

/// Inclusive pixel box; `x` runs along rows, `y` along columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// Ring width this box was extended by (0 for a bare component box).
    pub extension: usize,
    pub frame_index: usize,
}

impl ObjectBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        assert!(x0 <= x1 && y0 <= y1, "box corners out of order");
        Self {
            x0,
            y0,
            x1,
            y1,
            extension: 0,
            frame_index: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn cols(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn center(&self) -> (usize, usize) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    pub fn contains(&self, i: usize, k: usize) -> bool {
        i >= self.x0 && i <= self.x1 && k >= self.y0 && k <= self.y1
    }

    /// Grow by `e` on every side, clipped to a `rows x cols` image. The flag
    /// tells whether clipping happened.
    pub fn extended(&self, e: usize, rows: usize, cols: usize) -> (ObjectBox, bool) {
        let want = (
            self.x0 as isize - e as isize,
            self.y0 as isize - e as isize,
            self.x1 + e,
            self.y1 + e,
        );
        let b = ObjectBox {
            x0: want.0.max(0) as usize,
            y0: want.1.max(0) as usize,
            x1: want.2.min(rows - 1),
            y1: want.3.min(cols - 1),
            extension: e,
            frame_index: self.frame_index,
        };
        let clipped = want.0 < 0 || want.1 < 0 || want.2 >= rows || want.3 >= cols;
        (b, clipped)
    }
}

/// One 8-connected group of set pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub bbox: ObjectBox,
    pub area: usize,
    /// Mean pixel position `(row, col)`.
    pub centroid: (f64, f64),
}

/// 8-connected components of `mask`, in raster order of their first pixel,
/// keeping those with at least `min_area` pixels.
pub fn connected_components(mask: &BinaryRaster, min_area: usize) -> Vec<Component> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if seen[start] || !mask.as_slice()[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let (mut area, mut si, mut sk) = (0usize, 0.0, 0.0);
        while let Some(p) = stack.pop() {
            let (i, k) = (p / cols, p % cols);
            area += 1;
            si += i as f64;
            sk += k as f64;
            x0 = x0.min(i);
            x1 = x1.max(i);
            y0 = y0.min(k);
            y1 = y1.max(k);
            for di in -1isize..=1 {
                for dk in -1isize..=1 {
                    let (ni, nk) = (i as isize + di, k as isize + dk);
                    if ni < 0 || nk < 0 || ni >= rows as isize || nk >= cols as isize {
                        continue;
                    }
                    let q = ni as usize * cols + nk as usize;
                    if !seen[q] && mask.as_slice()[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if area >= min_area.max(1) {
            out.push(Component {
                bbox: ObjectBox::new(x0, y0, x1, y1),
                area,
                centroid: (si / area as f64, sk / area as f64),
            });
        }
    }
    out
}

/// Components of a detection mask (union over channels).
pub fn mask_components(mask: &DetectionMask, min_area: usize) -> Vec<Component> {
    connected_components(&mask.flags, min_area)
}

/// Row and column histogram differences against the surrounding ring.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEvidence {
    /// `rows(box) x K`; row `i` is the histogram of box row `i` minus the
    /// ring histogram.
    pub g_row: DMatrix<f64>,
    /// `K x cols(box)`; column `j` likewise for box column `j`.
    pub g_col: DMatrix<f64>,
    /// `g_row · g_col`.
    pub c: DMatrix<f64>,
    pub levels: usize,
    /// The clipped ring box actually used.
    pub ring: ObjectBox,
    pub warnings: Vec<Warning>,
}

fn level(v: f64, k: usize) -> usize {
    if !(v > 0.0) {
        0
    } else {
        (libm::floor(v) as usize).min(k - 1)
    }
}

/// Histograms are normalized to unit mass before subtraction, so a single
/// row compares with the ring on equal footing. Gray values are binned as
/// `floor(v)` clamped to `0..K`.
pub fn histogram_difference(
    image: &ImagePlane,
    bx: &ObjectBox,
    e: usize,
    k: usize,
) -> Result<HistogramEvidence> {
    let (rows, cols) = image.shape();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one level".into(),
        ));
    }
    if bx.x1 >= rows || bx.y1 >= cols {
        return Err(Error::DimensionMismatch(alloc::format!(
            "box {:?} outside {}x{} image",
            bx,
            rows,
            cols
        )));
    }
    let (ring, clipped) = bx.extended(e, rows, cols);
    let mut warnings = Vec::new();
    if clipped {
        warnings.push(Warning::ClippedBox);
    }
    let mut ge = vec![0.0; k];
    let mut n_ring = 0usize;
    for i in ring.x0..=ring.x1 {
        for j in ring.y0..=ring.y1 {
            if !bx.contains(i, j) {
                ge[level(image.get(i, j), k)] += 1.0;
                n_ring += 1;
            }
        }
    }
    if n_ring == 0 {
        return Err(Error::EmptyRing);
    }
    ge.iter_mut().for_each(|g| *g /= n_ring as f64);

    let (nr, nc) = (bx.rows(), bx.cols());
    let mut row_counts = DMatrix::<f64>::zeros(nr, k);
    let mut col_counts = DMatrix::<f64>::zeros(k, nc);
    for (r, i) in (bx.x0..=bx.x1).enumerate() {
        for (c, j) in (bx.y0..=bx.y1).enumerate() {
            let b = level(image.get(i, j), k);
            row_counts[(r, b)] += 1.0;
            col_counts[(b, c)] += 1.0;
        }
    }
    let g_row = DMatrix::from_fn(nr, k, |r, b| row_counts[(r, b)] / nc as f64 - ge[b]);
    let g_col = DMatrix::from_fn(k, nc, |b, c| col_counts[(b, c)] / nr as f64 - ge[b]);
    let c = &g_row * &g_col;
    Ok(HistogramEvidence {
        g_row,
        g_col,
        c,
        levels: k,
        ring,
        warnings,
    })
}

/// `c_b = 1` where `c > epsilon`.
pub fn binarize_evidence(c: &DMatrix<f64>, epsilon: f64) -> BinaryRaster {
    BinaryRaster::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] > epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityVerdict {
    pub object: bool,
    /// Fraction of ones per cell, cells in row-major order.
    pub cell_fill: Vec<f64>,
    pub max_fill: f64,
}

fn cell_starts(len: usize, cell: usize) -> Vec<usize> {
    if len < cell {
        return Vec::new();
    }
    let mut s: Vec<usize> = (0..len - cell + 1).step_by(cell).collect();
    // remainder strip: last cell is placed flush with the edge
    if *s.last().unwrap() + cell < len {
        s.push(len - cell);
    }
    s
}

/// Tile `cb` with `cell x cell` cells (the last row and column of cells sit
/// flush with the far edge, overlapping their neighbours if needed). True
/// when some cell's share of ones reaches `fill`. Evidence smaller than one
/// cell has no cells and is never an object: a few rows of histograms carry
/// no density.
pub fn density_verdict(cb: &BinaryRaster, cell: usize, fill: f64) -> DensityVerdict {
    let cell = cell.max(1);
    let (rows, cols) = (cb.rows(), cb.cols());
    let mut cell_fill = Vec::new();
    if rows > 0 && cols > 0 {
        for &r0 in &cell_starts(rows, cell) {
            for &c0 in &cell_starts(cols, cell) {
                let ones = (r0..r0 + cell)
                    .flat_map(|i| (c0..c0 + cell).map(move |j| (i, j)))
                    .filter(|&(i, j)| cb.get(i, j))
                    .count();
                cell_fill.push(ones as f64 / (cell * cell) as f64);
            }
        }
    }
    let max_fill = cell_fill.iter().copied().fold(0.0, f64::max);
    DensityVerdict {
        object: !cell_fill.is_empty() && max_fill >= fill,
        cell_fill,
        max_fill,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    #[default]
    Or,
    And,
}

/// Merge per-channel binary matrices of equal shape.
pub fn combine(parts: &[BinaryRaster], how: Combine) -> Result<BinaryRaster> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("nothing to combine".into()))?;
    let mut acc = first.clone();
    for p in rest {
        if (p.rows(), p.cols()) != (acc.rows(), acc.cols()) {
            return Err(Error::DimensionMismatch(
                "binary matrices differ in shape".into(),
            ));
        }
        acc = match how {
            Combine::Or => acc.or(p),
            Combine::And => acc.and(p),
        };
    }
    Ok(acc)
}

/// An object followed through the frame window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedObject {
    pub center: (usize, usize),
    /// Window size `(Sx, Sy)`.
    pub size: (usize, usize),
    pub bbox: ObjectBox,
}

/// The last `L` detection masks (oldest first) and the objects of the newest.
#[derive(Debug, Clone)]
pub struct TrackState {
    frames: VecDeque<BinaryRaster>,
    pub objects: Vec<TrackedObject>,
    window: usize,
    pub r_threshold: f64,
    next_frame: usize,
}

impl TrackState {
    pub fn new(window: usize, r_threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument(
                "track window must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&r_threshold) {
            return Err(Error::InvalidArgument(alloc::format!(
                "r threshold {r_threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            frames: VecDeque::new(),
            objects: Vec::new(),
            window,
            r_threshold,
            next_frame: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn frames(&self) -> &VecDeque<BinaryRaster> {
        &self.frames
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.window
    }

    /// Add the newest mask (positive pixels are the flagged ones) and
    /// rebuild the object list from its components.
    pub fn push(&mut self, mask: BinaryRaster, min_area: usize) -> Result<()> {
        if let Some(f) = self.frames.front() {
            if (f.rows(), f.cols()) != (mask.rows(), mask.cols()) {
                return Err(Error::DimensionMismatch(
                    "frame masks differ in shape".into(),
                ));
            }
        }
        if self.frames.len() == self.window {
            self.frames.pop_front();
        }
        let frame = self.next_frame;
        self.next_frame += 1;
        self.objects = connected_components(&mask, min_area)
            .into_iter()
            .map(|c| {
                let mut bbox = c.bbox;
                bbox.frame_index = frame;
                TrackedObject {
                    center: (
                        libm::round(c.centroid.0) as usize,
                        libm::round(c.centroid.1) as usize,
                    ),
                    size: (bbox.rows(), bbox.cols()),
                    bbox,
                }
            })
            .collect();
        self.frames.push_back(mask);
        Ok(())
    }

    pub fn push_detection(&mut self, mask: &DetectionMask, min_area: usize) -> Result<()> {
        self.push(mask.flags.clone(), min_area)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    /// No positive pixel in any frame of the window.
    pub empty: bool,
}

/// Overlap of the oldest frame's positives with every frame's, relative to
/// all positives, inside the `Sx x Sy` window centred on the object:
/// `r = sum_t sum 1{v0 > 0} 1{vt > 0} / sum_t sum 1{vt > 0}`.
pub fn binary_correlation(track: &TrackState, object_index: usize) -> Result<Correlation> {
    let obj = track
        .objects
        .get(object_index)
        .ok_or_else(|| Error::InvalidArgument(alloc::format!("no object {object_index}")))?;
    let first = track
        .frames
        .front()
        .ok_or_else(|| Error::InvalidArgument("no frames".into()))?;
    let (rows, cols) = (first.rows(), first.cols());
    let (sx, sy) = obj.size;
    let r0 = obj.center.0.saturating_sub(sx / 2);
    let c0 = obj.center.1.saturating_sub(sy / 2);
    let (r1, c1) = ((r0 + sx).min(rows), (c0 + sy).min(cols));
    let (mut num, mut den) = (0usize, 0usize);
    for frame in &track.frames {
        for i in r0..r1 {
            for k in c0..c1 {
                if frame.get(i, k) {
                    den += 1;
                    if first.get(i, k) {
                        num += 1;
                    }
                }
            }
        }
    }
    if den == 0 {
        return Ok(Correlation {
            r: 0.0,
            empty: true,
        });
    }
    Ok(Correlation {
        r: num as f64 / den as f64,
        empty: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackVerdict {
    /// Object box extended by the ring width (clipped to the image).
    pub bbox: ObjectBox,
    pub r: f64,
    pub confirmed: bool,
}

/// Correlation verdict for every object of the newest frame.
pub fn track_verdicts(track: &TrackState, e: usize) -> Result<Vec<TrackVerdict>> {
    let Some(first) = track.frames.front() else {
        return Ok(Vec::new());
    };
    let (rows, cols) = (first.rows(), first.cols());
    (0..track.objects.len())
        .map(|idx| {
            let c = binary_correlation(track, idx)?;
            let (bbox, _) = track.objects[idx].bbox.extended(e, rows, cols);
            Ok(TrackVerdict {
                bbox,
                r: c.r,
                confirmed: c.r > track.r_threshold,
            })
        })
        .collect()
}

/// Objects with `r` above the threshold, re-emitted with the extended box.
pub fn track_filter(track: &TrackState, e: usize) -> Result<Vec<ObjectBox>> {
    Ok(track_verdicts(track, e)?
        .into_iter()
        .filter(|v| v.confirmed)
        .map(|v| v.bbox)
        .collect())
}
