//! Inverse resonance filter: a kernel whose response cancels every texture
//! mode and maps the constant mode to a flat level `E`, so own texture
//! filters to `E + noise` and anything foreign stands out.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::harmonic_model::{spectrum, HarmonicModel, ResonanceRoots};
use crate::linalg::lagrange_basis;
use crate::{BinaryRaster, Error, ImagePlane, ImageStack, Result, Warning};

/// Multiplier of the noise standard deviation in the anomaly predicate.
pub const SIGMA_MULTIPLIER: f64 = 3.0;
/// Components with `|A| < DROP_TOLERANCE * max|A|` are left out of the filter.
pub const DROP_TOLERANCE: f64 = 1e-9;
/// Roots closer than this to `z = 1` are snapped onto it.
pub const DC_SNAP: f64 = 1e-6;
/// Kernel imaginary parts above this (relative to `max|h|`) raise a warning.
pub const IMAG_TOLERANCE: f64 = 1e-8;

/// How the flat level `E` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EPolicy {
    /// Mean of the base region.
    #[default]
    Mean,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub e_policy: EPolicy,
    /// Move every root onto the unit circle before design.
    pub project_roots: bool,
    /// Drop non-constant roots within this distance of `z = 1`. Such roots
    /// come from slow trends and make the constant mode nearly unobservable.
    pub dc_guard: f64,
    pub channel: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            e_policy: EPolicy::Mean,
            project_roots: true,
            dc_guard: 0.0,
            channel: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IRFilter {
    /// Correlation kernel, rows along x.
    pub h: DMatrix<f64>,
    pub e: f64,
    pub sigma2: f64,
    pub order: (usize, usize),
    pub channel: usize,
}

impl IRFilter {
    /// Build a filter from a known kernel (the dispersion is left at zero).
    pub fn from_kernel(h: DMatrix<f64>, e: f64, channel: usize) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidArgument("empty kernel".into()));
        }
        if h.iter().any(|v| !v.is_finite()) || !e.is_finite() {
            return Err(Error::NonFinite("filter kernel"));
        }
        let order = h.shape();
        Ok(Self {
            h,
            e,
            sigma2: 0.0,
            order,
            channel,
        })
    }

    pub fn sigma(&self) -> f64 {
        libm::sqrt(self.sigma2)
    }
}

/// A designed filter plus what the design had to give up on.
#[derive(Debug, Clone)]
pub struct FilterDesign {
    pub filter: IRFilter,
    /// Roots the kernel was synthesized from (after projection and the
    /// constant-root adjustment).
    pub zx: ResonanceRoots,
    pub zy: ResonanceRoots,
    pub amplitudes: DMatrix<Complex64>,
    pub gains: DMatrix<Complex64>,
    pub imag_residue: f64,
    pub warnings: Vec<Warning>,
}

fn with_constant_root(
    roots: &ResonanceRoots,
    guard: f64,
    axis: char,
    warnings: &mut Vec<Warning>,
) -> ResonanceRoots {
    let one = Complex64::new(1.0, 0.0);
    let mut v = roots.as_slice().to_vec();
    match roots.dc_index(DC_SNAP) {
        Some(i) => v[i] = one,
        None => {
            v.push(one);
            warnings.push(Warning::DcRootInserted { axis });
        }
    }
    if guard > 0.0 {
        let mut kept_one = false;
        v.retain(|&z| {
            if z == one && !kept_one {
                kept_one = true;
                return true;
            }
            (z - one).norm() >= guard
        });
    }
    ResonanceRoots::new(v)
}

fn basis_rows(roots: &ResonanceRoots) -> Result<Vec<Vec<Complex64>>> {
    (0..roots.len())
        .map(|j| lagrange_basis(roots.as_slice(), j))
        .collect()
}

/// Design the filter for `base` from the model's roots.
///
/// The amplitudes `A` are refitted on `base`; the flat target's spectrum
/// `E_mn` is the fit of a constant-`E` region on the same roots, so the gain
/// per mode is `H = E_mn / A_mn`. The kernel is
/// `h = Re sum H_mn lx_m (x) ly_n` where `lx_m` are the coefficient rows of
/// the Lagrange polynomials of the x roots (the inverse Vandermonde rows):
/// its response at `(zx_m, zy_n)` is exactly `H_mn`.
pub fn design_filter(
    base: &ImagePlane,
    model: &HarmonicModel,
    opts: &DesignOptions,
) -> Result<FilterDesign> {
    let mut warnings = Vec::new();
    let (mut zx, mut zy) = (model.zx.clone(), model.zy.clone());
    if opts.project_roots {
        zx = zx.projected();
        zy = zy.projected();
    }
    let (zx, zy) = (zx.dedup(DC_SNAP), zy.dedup(DC_SNAP));
    let zx = with_constant_root(&zx, opts.dc_guard, 'x', &mut warnings);
    let zy = with_constant_root(&zy, opts.dc_guard, 'y', &mut warnings);
    let (p, q) = (zx.len(), zy.len());
    let (nx, ny) = base.shape();
    if nx < p + 1 || ny < q + 1 {
        return Err(Error::WindowTooLarge {
            window: (p + 1, q + 1),
            image: (nx, ny),
        });
    }
    let e = match opts.e_policy {
        EPolicy::Mean => base.mean(),
        EPolicy::Fixed(c) => c,
    };
    if !e.is_finite() {
        return Err(Error::NonFinite("flat level"));
    }
    if e == 0.0 {
        // every gain would be zero and the filter output identically zero
        return Err(Error::InvalidArgument(
            "flat level E must be nonzero".into(),
        ));
    }

    let a = spectrum(base, &zx, &zy)?.amplitudes;
    let mut target = spectrum(&ImagePlane::filled(nx, ny, e), &zx, &zy)?.amplitudes;
    let tmax = target.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    target.iter_mut().for_each(|v| {
        if v.norm() < 1e-6 * tmax {
            *v = Complex64::new(0.0, 0.0);
        }
    });
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let mut gains = DMatrix::from_element(p, q, Complex64::new(0.0, 0.0));
    for m in 0..p {
        for n in 0..q {
            if target[(m, n)].norm() == 0.0 {
                continue;
            }
            if !(a[(m, n)].norm() >= DROP_TOLERANCE * amax) || amax == 0.0 {
                warnings.push(Warning::DroppedComponent {
                    row: m,
                    col: n,
                    magnitude: a[(m, n)].norm(),
                });
                continue;
            }
            gains[(m, n)] = target[(m, n)] / a[(m, n)];
        }
    }
    if gains.iter().all(|g| g.norm() == 0.0) {
        return Err(Error::UnreachableFlatLevel(
            "constant mode has no amplitude in the base region".into(),
        ));
    }

    let lx = basis_rows(&zx)?;
    let ly = basis_rows(&zy)?;
    let mut hc = DMatrix::from_element(p, q, Complex64::new(0.0, 0.0));
    for m in 0..p {
        for n in 0..q {
            let g = gains[(m, n)];
            if g.norm() == 0.0 {
                continue;
            }
            for i in 0..p {
                let gi = g * lx[m][i];
                for k in 0..q {
                    hc[(i, k)] += gi * ly[n][k];
                }
            }
        }
    }
    let hmax = hc.iter().fold(0.0f64, |m, v| m.max(v.re.abs()));
    let imag = hc.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    let imag_residue = if hmax > 0.0 { imag / hmax } else { imag };
    if imag_residue > IMAG_TOLERANCE {
        warnings.push(Warning::KernelImaginaryResidue(imag_residue));
    }
    let h = hc.map(|v| v.re);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filter kernel"));
    }
    let mut filter = IRFilter {
        h,
        e,
        sigma2: 0.0,
        order: (p, q),
        channel: opts.channel,
    };
    filter.sigma2 = noise_dispersion(&apply_filter(base, &filter)?, e);
    Ok(FilterDesign {
        filter,
        zx,
        zy,
        amplitudes: a,
        gains,
        imag_residue,
        warnings,
    })
}

/// Valid-region sliding sum `out[i][k] = sum_m sum_n h[m][n] d[i+m][k+n]`,
/// summed with `m` outer and `n` inner.
pub fn apply_filter(image: &ImagePlane, f: &IRFilter) -> Result<ImagePlane> {
    let (p, q) = f.h.shape();
    let (nx, ny) = image.shape();
    if nx < p || ny < q {
        return Err(Error::WindowTooLarge {
            window: (p, q),
            image: (nx, ny),
        });
    }
    let hrows: Vec<Vec<f64>> = (0..p)
        .map(|m| (0..q).map(|n| f.h[(m, n)]).collect())
        .collect();
    let (ox, oy) = (nx - p + 1, ny - q + 1);
    let mut out = Vec::with_capacity(ox * oy);
    for i in 0..ox {
        for k in 0..oy {
            let mut acc = 0.0;
            for (m, hr) in hrows.iter().enumerate() {
                let row = &image.row(i + m)[k..k + q];
                for n in 0..q {
                    acc += hr[n] * row[n];
                }
            }
            out.push(acc);
        }
    }
    ImagePlane::from_vec(ox, oy, out)
}

/// Mean squared deviation of `filtered` from `e`.
pub fn noise_dispersion(filtered: &ImagePlane, e: f64) -> f64 {
    let n = filtered.as_slice().len();
    if n == 0 {
        return 0.0;
    }
    filtered
        .as_slice()
        .iter()
        .map(|v| (v - e) * (v - e))
        .sum::<f64>()
        / n as f64
}

/// Detection verdicts in original image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMask {
    /// Per channel: the original value at flagged pixels, zero elsewhere.
    /// A flagged pixel whose original value is exactly zero is stored as
    /// `f64::MIN_POSITIVE` so it stays distinguishable.
    pub v: ImageStack,
    /// Union of the per-channel predicates.
    pub flags: BinaryRaster,
    /// Top-left corner of the region the filter output covers.
    pub offset: (usize, usize),
    /// Size of that region.
    pub valid: (usize, usize),
}

impl DetectionMask {
    pub fn count(&self) -> usize {
        self.flags.count()
    }
}

/// Union over channels of `|filtered - E| > 3 sigma`.
pub fn detect(
    filtered: &[ImagePlane],
    filters: &[IRFilter],
    original: &ImageStack,
) -> Result<DetectionMask> {
    detect_with(filtered, filters, original, SIGMA_MULTIPLIER)
}

/// Largest kernel extent over the channels.
pub fn support(filters: &[IRFilter]) -> (usize, usize) {
    filters
        .iter()
        .fold((1, 1), |(p, q), f| (p.max(f.h.nrows()), q.max(f.h.ncols())))
}

/// [`detect`] with a custom sigma multiplier.
pub fn detect_with(
    filtered: &[ImagePlane],
    filters: &[IRFilter],
    original: &ImageStack,
    k: f64,
) -> Result<DetectionMask> {
    if filtered.len() != filters.len() || filtered.len() != original.len() || filtered.is_empty() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} filtered planes, {} filters, {} channels",
            filtered.len(),
            filters.len(),
            original.len()
        )));
    }
    let (rows, cols) = original.shape();
    for (f, flt) in filtered.iter().zip(filters) {
        let (p, q) = flt.h.shape();
        if f.rows() + p - 1 != rows || f.cols() + q - 1 != cols {
            return Err(Error::DimensionMismatch(alloc::format!(
                "filtered {:?} with {}x{} kernel does not match image {:?}",
                f.shape(),
                p,
                q,
                (rows, cols)
            )));
        }
    }
    // channels may carry kernels of different sizes; keep the pixels every
    // channel covers
    let (p, q) = support(filters);
    let offset = (p / 2, q / 2);
    let valid = (rows + 1 - p, cols + 1 - q);
    let mut flags = BinaryRaster::new(rows, cols);
    for (f, flt) in filtered.iter().zip(filters) {
        let thr = k * flt.sigma();
        let (fp, fq) = flt.h.shape();
        let (di, dj) = (offset.0 - fp / 2, offset.1 - fq / 2);
        for i in 0..valid.0 {
            for j in 0..valid.1 {
                if (f.get(i + di, j + dj) - flt.e).abs() > thr {
                    flags.set(i + offset.0, j + offset.1, true);
                }
            }
        }
    }
    let planes = original
        .channels()
        .iter()
        .map(|ch| {
            ImagePlane::from_fn(rows, cols, |i, j| {
                if !flags.get(i, j) {
                    0.0
                } else if ch.get(i, j) == 0.0 {
                    f64::MIN_POSITIVE
                } else {
                    ch.get(i, j)
                }
            })
        })
        .collect();
    Ok(DetectionMask {
        v: ImageStack::new(planes)?,
        flags,
        offset,
        valid,
    })
}
