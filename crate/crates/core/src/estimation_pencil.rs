//! 2D correlation-matrix splitting (matrix pencil) estimator.
//!
//! The 2D correlation matrix of an `L x L` window has its signal subspace
//! spanned by vectors `w(kx, ky) = zx^kx · zy^ky`, one per 2D mode. Rows of
//! the principal singular vectors `U` are indexed `kx·L + ky`. Dropping the
//! last x lag (and last y lag) gives the base block `U0`; shifting by one x
//! lag gives `Ux`, by one y lag `Uy`:
//!
//! ```text
//! U0: kx in 0..L-1, ky in 0..L-1
//! Ux: kx in 1..L,   ky in 0..L-1
//! Uy: kx in 0..L-1, ky in 1..L
//! ```
//!
//! Eigenvalues of `(U0^T U0)^{-1} U0^T Ux` are the x roots, likewise for y.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::estimation_ls::{correlation_2d, Correlation2D};
use crate::harmonic_model::{spectrum, ResonanceRoots};
use crate::linalg::inverse_checked;
use crate::{Error, ImagePlane, Result};

/// Relative singular value below which a direction counts as noise-free null.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Update denominators below this signal rank loss in the iterative inverse.
pub const GRAM_PIVOT_TOLERANCE: f64 = 1e-12;

/// Principal left singular vectors of a 2D correlation matrix.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    /// `(L·L) x p_model`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Splitting parameter (correlation window side).
    pub split: usize,
    /// Size of the data region the correlation came from.
    pub dims: (usize, usize),
}

/// Default splitting parameter: `min(M, N) / 3` clamped to
/// `[p_model, min(M, N) - 2]`.
pub fn default_split(dims: (usize, usize), p_model: usize) -> usize {
    let lo = dims.0.min(dims.1);
    (lo / 3).max(p_model).min(lo.saturating_sub(2))
}

/// Top `p_model` left singular vectors of `R2`.
pub fn svd_correlation(r2: &Correlation2D, p_model: usize) -> Result<SubspaceBasis> {
    let (lx, ly) = r2.window;
    if lx != ly {
        return Err(Error::InvalidArgument(
            "pencil needs a square correlation window".into(),
        ));
    }
    let dim = r2.matrix.nrows();
    if p_model == 0 || p_model > dim {
        return Err(Error::OrderExceedsRank {
            order: p_model,
            rank: dim,
        });
    }
    // R2 is symmetric PSD, so its eigenvectors are its singular vectors
    let eig = r2.matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let singular_values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].abs()).collect();
    let smax = singular_values[0];
    let rank = singular_values
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * smax)
        .count();
    if smax <= 0.0 || singular_values[p_model - 1] < RANK_TOLERANCE * smax {
        return Err(Error::OrderExceedsRank {
            order: p_model,
            rank,
        });
    }
    let u = DMatrix::from_fn(dim, p_model, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SubspaceBasis {
        u,
        singular_values,
        split: lx,
        dims: r2.source_size,
    })
}

/// Number of signal directions: the position of the largest ratio between
/// consecutive singular values among the first `max_rank + 1`. Exactly-null
/// tails count as an infinite gap.
pub fn signal_rank(singular_values: &[f64], max_rank: usize) -> usize {
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let mut best = (1, 0.0f64);
    for k in 1..=max_rank.min(singular_values.len().saturating_sub(1)) {
        let (hi, lo) = (singular_values[k - 1], singular_values[k]);
        if lo <= RANK_TOLERANCE * smax {
            return if hi > RANK_TOLERANCE * smax {
                k
            } else {
                best.0
            };
        }
        let gap = hi / lo;
        if gap > best.1 {
            best = (k, gap);
        }
    }
    if max_rank >= singular_values.len() {
        return singular_values.len().max(1);
    }
    best.0
}

/// Row indices of `U0`, `Ux` and `Uy` for an `L x L` window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PencilRows {
    pub base: Vec<usize>,
    pub shift_x: Vec<usize>,
    pub shift_y: Vec<usize>,
}

/// Admissible range of the splitting parameter for a region and model.
pub fn split_range(dims: (usize, usize), p_model: usize) -> (usize, usize) {
    let lo = dims.0.min(dims.1);
    (p_model.max(2), lo.saturating_sub(2))
}

pub fn pencil_rows(split: usize, dims: (usize, usize), p_model: usize) -> Result<PencilRows> {
    let (min, max) = split_range(dims, p_model);
    if split < min || split > max || (split - 1) * (split - 1) < p_model {
        return Err(Error::SplitOutOfRange { split, min, max });
    }
    let l = split;
    let mut base = Vec::new();
    let mut shift_x = Vec::new();
    let mut shift_y = Vec::new();
    for kx in 0..l - 1 {
        for ky in 0..l - 1 {
            base.push(kx * l + ky);
            shift_x.push((kx + 1) * l + ky);
            shift_y.push(kx * l + ky + 1);
        }
    }
    Ok(PencilRows {
        base,
        shift_x,
        shift_y,
    })
}

/// `(U0, Ux, Uy)` extracted from the basis.
#[derive(Debug, Clone)]
pub struct PencilBlocks {
    pub u0: DMatrix<f64>,
    pub ux: DMatrix<f64>,
    pub uy: DMatrix<f64>,
}

pub fn extract_submatrices(basis: &SubspaceBasis) -> Result<PencilBlocks> {
    let rows = pencil_rows(basis.split, basis.dims, basis.u.ncols())?;
    let take =
        |idx: &[usize]| DMatrix::from_fn(idx.len(), basis.u.ncols(), |r, c| basis.u[(idx[r], c)]);
    Ok(PencilBlocks {
        u0: take(&rows.base),
        ux: take(&rows.shift_x),
        uy: take(&rows.shift_y),
    })
}

/// `(U0^T U0)^{-1}` by a dense inverse.
pub fn gram_inverse_direct(u0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    inverse_checked(&(u0.transpose() * u0), 1e12, "pencil Gram matrix")
}

/// `(U0^T U0)^{-1}` by Sherman–Morrison rank-one steps.
///
/// Starting from `E = I`, every row `u` of `U0` is added with
/// `E <- E - (E u)(u^T E) / (1 + u^T E u)`, which yields `(I + U0^T U0)^{-1}`;
/// the seed identity is then removed one axis at a time with the downdate
/// `E <- E + (E e_j)(e_j^T E) / (1 - e_j^T E e_j)`. Steps are numbered
/// `0..rows` for data rows and `rows + j` for the seed axes; a vanishing
/// denominator is reported with its step.
pub fn gram_inverse_iterative(u0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, p) = u0.shape();
    let mut e = DMatrix::<f64>::identity(p, p);
    let mut eu = alloc::vec![0.0; p];
    for r in 0..rows {
        for i in 0..p {
            eu[i] = (0..p).map(|j| e[(i, j)] * u0[(r, j)]).sum();
        }
        let denom = 1.0 + (0..p).map(|j| u0[(r, j)] * eu[j]).sum::<f64>();
        if !(denom.abs() > GRAM_PIVOT_TOLERANCE) {
            return Err(Error::GramRankDeficient {
                step: r,
                denominator: denom,
            });
        }
        for i in 0..p {
            for j in 0..p {
                e[(i, j)] -= eu[i] * eu[j] / denom;
            }
        }
    }
    for axis in 0..p {
        let col: Vec<f64> = (0..p).map(|i| e[(i, axis)]).collect();
        let denom = 1.0 - col[axis];
        if !(denom > GRAM_PIVOT_TOLERANCE) {
            return Err(Error::GramRankDeficient {
                step: rows + axis,
                denominator: denom,
            });
        }
        for i in 0..p {
            for j in 0..p {
                e[(i, j)] += col[i] * col[j] / denom;
            }
        }
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iterative Gram inverse"));
    }
    Ok(e)
}

/// Eigenvalues of `gram_inv · U0^T · U_shift`.
pub fn pencil_eigenvalues(
    u0: &DMatrix<f64>,
    ushift: &DMatrix<f64>,
    gram_inv: &DMatrix<f64>,
) -> Result<ResonanceRoots> {
    if u0.shape() != ushift.shape() || gram_inv.nrows() != u0.ncols() || !gram_inv.is_square() {
        return Err(Error::DimensionMismatch(
            "pencil blocks do not conform".into(),
        ));
    }
    let z = gram_inv * u0.transpose() * ushift;
    let eig = z.complex_eigenvalues();
    let roots: Vec<Complex64> = eig.iter().map(|v| Complex64::new(v.re, v.im)).collect();
    if roots.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("pencil eigenvalues"));
    }
    Ok(ResonanceRoots::new(roots))
}

/// How the pencil's Gram inverse is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramMethod {
    #[default]
    Direct,
    ShermanMorrison,
}

/// Raw x and y roots of the pencil plus subspace diagnostics.
#[derive(Debug, Clone)]
pub struct PencilEstimate {
    pub zx: ResonanceRoots,
    pub zy: ResonanceRoots,
    pub singular_values: Vec<f64>,
    pub split: usize,
}

impl PencilEstimate {
    pub fn dampings(&self) -> (Vec<f64>, Vec<f64>) {
        (self.zx.dampings(), self.zy.dampings())
    }
}

/// Full splitting-method estimate on the mean-removed region: `p` principal
/// vectors for the x pencil and `q` for the y pencil, taken from one SVD.
pub fn estimate_pencil(
    region: &ImagePlane,
    p: usize,
    q: usize,
    split: Option<usize>,
    gram: GramMethod,
) -> Result<PencilEstimate> {
    let dims = region.shape();
    let p_model = p.max(q);
    let split = split.unwrap_or_else(|| default_split(dims, p_model));
    pencil_rows(split, dims, p_model)?;
    let mean = region.mean();
    let centered = region.map(|v| v - mean);
    let r2 = correlation_2d(&centered, split, split)?;
    let basis = svd_correlation(&r2, p_model)?;
    let roots_for = |order: usize, shift_y: bool| -> Result<ResonanceRoots> {
        let sub = SubspaceBasis {
            u: basis.u.columns(0, order).into_owned(),
            singular_values: Vec::new(),
            split,
            dims,
        };
        let blocks = extract_submatrices(&sub)?;
        let ginv = match gram {
            GramMethod::Direct => gram_inverse_direct(&blocks.u0)?,
            GramMethod::ShermanMorrison => gram_inverse_iterative(&blocks.u0)?,
        };
        pencil_eigenvalues(
            &blocks.u0,
            if shift_y { &blocks.uy } else { &blocks.ux },
            &ginv,
        )
    };
    let zx = roots_for(p, false)?;
    let zy = roots_for(q, true)?;
    Ok(PencilEstimate {
        zx,
        zy,
        singular_values: basis.singular_values,
        split,
    })
}

/// One `(zx, zy)` grid cell with its fitted amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComponent {
    pub zx: Complex64,
    pub zy: Complex64,
    pub amplitude: Complex64,
}

#[derive(Debug, Clone)]
pub struct PencilResult {
    pub zx: ResonanceRoots,
    pub zy: ResonanceRoots,
    pub dampings_x: Vec<f64>,
    pub dampings_y: Vec<f64>,
    /// The full `P x Q` amplitude grid.
    pub amplitudes: DMatrix<Complex64>,
    /// Grid cells sorted by decreasing `|A|`.
    pub paired: Vec<PairedComponent>,
}

impl PencilResult {
    /// Share of `sum |A|^2` carried by the `n` strongest cells.
    pub fn energy_fraction(&self, n: usize) -> f64 {
        let total: f64 = self.paired.iter().map(|c| c.amplitude.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.paired
            .iter()
            .take(n)
            .map(|c| c.amplitude.norm_sqr())
            .sum::<f64>()
            / total
    }
}

/// Least-squares amplitudes over the Cartesian grid of x and y roots, so no
/// discrete pairing decision is made.
pub fn pair_frequencies(
    zx: &ResonanceRoots,
    zy: &ResonanceRoots,
    region: &ImagePlane,
) -> Result<PencilResult> {
    let s = spectrum(region, zx, zy)?;
    let a = s.amplitudes;
    let mut paired = Vec::with_capacity(zx.len() * zy.len());
    for m in 0..zx.len() {
        for n in 0..zy.len() {
            paired.push(PairedComponent {
                zx: zx.as_slice()[m],
                zy: zy.as_slice()[n],
                amplitude: a[(m, n)],
            });
        }
    }
    paired.sort_by(|u, v| {
        v.amplitude
            .norm()
            .partial_cmp(&u.amplitude.norm())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    Ok(PencilResult {
        zx: zx.clone(),
        zy: zy.clone(),
        dampings_x: zx.dampings(),
        dampings_y: zy.dampings(),
        amplitudes: a,
        paired,
    })
}
