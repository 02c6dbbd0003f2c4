//! Linear-symmetry estimation of characteristic polynomials.
//!
//! Correlation matrices are unnormalized lag-product sums. For order `p` the
//! estimators take a `(p+1) x (p+1)` matrix `R` over lags `0..=p`; the
//! prediction-error filter `c` with `c[p] = 1` minimizes `c^T R c`, and the
//! polynomial coefficients are read back as `a_{p-i} = c_i`, so that the shift
//! operator built from `a` propagates the data forward.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::harmonic_model::{shift_eigenvalues, PolynomialCoeffs, ResonanceRoots};
use crate::linalg::solve_checked;
use crate::{Error, ImagePlane, Result, Warning};

/// Largest condition number accepted for the normal equations.
pub const MAX_CONDITION: f64 = 1e12;

/// `(P·Q) x (P·Q)` 2D correlation matrix; entry
/// `(ix·Q + iy, kx·Q + ky) = sum_{m,n} u[m+ix][n+iy] · u[m+kx][n+ky]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation2D {
    pub matrix: DMatrix<f64>,
    pub window: (usize, usize),
    pub source_size: (usize, usize),
}

impl Correlation2D {
    /// Number of window positions summed into each entry.
    pub fn terms(&self) -> usize {
        (self.source_size.0 - self.window.0 + 1) * (self.source_size.1 - self.window.1 + 1)
    }
}

/// Lag-product sums over every `P x Q` window of `image` (positions
/// `m = 0..=nx-P`, `n = 0..=ny-Q`, row-major accumulation order).
pub fn correlation_2d(image: &ImagePlane, p: usize, q: usize) -> Result<Correlation2D> {
    let (nx, ny) = image.shape();
    if p == 0 || q == 0 || p > nx || q > ny {
        return Err(Error::WindowTooLarge {
            window: (p, q),
            image: (nx, ny),
        });
    }
    let dim = p * q;
    let mut acc = vec![0.0f64; dim * dim];
    let mut patch = vec![0.0f64; dim];
    for m in 0..=nx - p {
        for n in 0..=ny - q {
            for ix in 0..p {
                patch[ix * q..(ix + 1) * q].copy_from_slice(&image.row(m + ix)[n..n + q]);
            }
            for a in 0..dim {
                let pa = patch[a];
                let row = &mut acc[a * dim..(a + 1) * dim];
                for b in a..dim {
                    row[b] += pa * patch[b];
                }
            }
        }
    }
    let matrix = DMatrix::from_fn(dim, dim, |a, b| {
        if a <= b {
            acc[a * dim + b]
        } else {
            acc[b * dim + a]
        }
    });
    Ok(Correlation2D {
        matrix,
        window: (p, q),
        source_size: (nx, ny),
    })
}

/// Correlations along each axis with the orthogonal lag fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCorrelation {
    pub rx: DMatrix<f64>,
    pub ry: DMatrix<f64>,
}

pub fn marginal_correlations(r2: &Correlation2D) -> MarginalCorrelation {
    let (p, q) = r2.window;
    let rx = DMatrix::from_fn(p, p, |i, k| r2.matrix[(i * q, k * q)]);
    let ry = DMatrix::from_fn(q, q, |i, k| r2.matrix[(i, k)]);
    MarginalCorrelation { rx, ry }
}

/// Coefficients and model-error dispersion of an LS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub coeffs: PolynomialCoeffs,
    /// Residual energy of the prediction-error filter.
    pub sigma2: f64,
    /// `1 / sigma2` (infinite for an exact fit).
    pub rho_last: f64,
}

impl LsSolution {
    fn new(coeffs: PolynomialCoeffs, sigma2: f64) -> Self {
        let sigma2 = sigma2.max(0.0);
        let rho_last = if sigma2 > 0.0 {
            1.0 / sigma2
        } else {
            f64::INFINITY
        };
        Self {
            coeffs,
            sigma2,
            rho_last,
        }
    }

    /// Resonance roots (shift-operator eigenvalues).
    pub fn roots(&self) -> Result<ResonanceRoots> {
        shift_eigenvalues(&self.coeffs)
    }
}

fn order_of(rp: &DMatrix<f64>) -> Result<usize> {
    if rp.nrows() != rp.ncols() {
        return Err(Error::DimensionMismatch(
            "correlation matrix is not square".into(),
        ));
    }
    if rp.nrows() < 2 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    if rp.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation matrix"));
    }
    Ok(rp.nrows() - 1)
}

/// Plain linear prediction of order `p` from a `(p+1) x (p+1)` correlation
/// matrix. The filter is the last column of `R^{-1}` scaled to a unit last
/// entry, computed through the leading `p x p` block so an exactly modelled
/// signal (singular `R`) still has a solution.
pub fn ls_coefficients(rp: &DMatrix<f64>) -> Result<LsSolution> {
    let p = order_of(rp)?;
    let r00 = rp.view((0, 0), (p, p)).into_owned();
    let r0p = rp.view((0, p), (p, 1)).into_owned();
    let head = solve_checked(&r00, &(-&r0p), MAX_CONDITION, "linear prediction")?;
    let mut c = head.column(0).iter().cloned().collect::<Vec<_>>();
    c.push(1.0);
    let sigma2 = rp[(p, p)] + (r0p.transpose() * &head)[(0, 0)];
    let a = (1..=p).map(|j| c[p - j]).collect();
    Ok(LsSolution::new(PolynomialCoeffs::new(a)?, sigma2))
}

/// Linear prediction constrained to a palindromic polynomial
/// (`a_p = 1`, `a_i = a_{p-i}`), `p` even.
///
/// With `s_j = e_j + e_{p-j}` for `j < p/2`, `s_{p/2} = e_{p/2}` and
/// `s_0 = e_0 + e_p`, the free half `θ` solves
/// `sum_j θ_j s_k^T R s_j = -s_k^T R s_0` for `k = 1..=p/2`.
pub fn ls_symmetric_coefficients(rp: &DMatrix<f64>) -> Result<LsSolution> {
    let p = order_of(rp)?;
    if p % 2 != 0 {
        return Err(Error::OddOrder(p));
    }
    let h = p / 2;
    // s_k^T R s_j expanded into at most four entries.
    let pair = |j: usize| -> Vec<usize> {
        if j == h {
            vec![h]
        } else {
            vec![j, p - j]
        }
    };
    let form = |k: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for &u in &pair(k) {
            for &v in &pair(j) {
                s += rp[(u, v)];
            }
        }
        s
    };
    let m = DMatrix::from_fn(h, h, |k, j| form(k + 1, j + 1));
    let b = DMatrix::from_fn(h, 1, |k, _| -form(k + 1, 0));
    let theta = solve_checked(&m, &b, MAX_CONDITION, "symmetric linear prediction")?;
    let half: Vec<f64> = theta.column(0).iter().cloned().collect();
    let coeffs = PolynomialCoeffs::palindromic_from_half(&half)?;
    let c = DVector::from_vec(coeffs.full());
    let sigma2 = (c.transpose() * rp * &c)[(0, 0)];
    Ok(LsSolution::new(coeffs, sigma2))
}

/// Axis of a marginal correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Marginal correlation of order `p` (window `p+1`) along one axis.
pub fn axis_correlation(image: &ImagePlane, p: usize, axis: Axis) -> Result<(DMatrix<f64>, usize)> {
    let r2 = match axis {
        Axis::X => correlation_2d(image, p + 1, 1)?,
        Axis::Y => correlation_2d(image, 1, p + 1)?,
    };
    let terms = r2.terms();
    Ok((r2.matrix, terms))
}

/// Result of the order scan.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub order: usize,
    /// `(p, rho)` per scanned even order; `rho` is the inverse per-term
    /// residual of the symmetric model.
    pub rho_scan: Vec<(usize, f64)>,
    pub warning: Option<Warning>,
}

/// Relative margin by which a maximum must exceed its neighbours.
pub const ORDER_PROMINENCE: f64 = 0.01;

/// Residual energy, relative to the signal energy, below which a fit counts
/// as exact (the sample mean left in a finite region limits how small it gets).
const EXACT_FIT: f64 = 1e-6;

/// Scan even orders `2..=p_max` of the symmetric model on the mean-removed
/// image and return the first prominent maximum of `rho`.
pub fn order_select(image: &ImagePlane, p_max: usize, axis: Axis) -> Result<OrderSelection> {
    if p_max < 2 {
        return Err(Error::InvalidArgument("p_max must be at least 2".into()));
    }
    let mean = image.mean();
    let centered = image.map(|v| v - mean);
    let energy = centered.as_slice().iter().map(|v| v * v).sum::<f64>();
    let mut scan: Vec<(usize, f64)> = Vec::new();
    let mut p = 2;
    while p <= p_max {
        let (rp, terms) = axis_correlation(&centered, p, axis)?;
        let rho = match ls_symmetric_coefficients(&rp) {
            Ok(sol) => {
                if sol.sigma2 <= EXACT_FIT * energy {
                    f64::INFINITY
                } else {
                    terms as f64 / sol.sigma2
                }
            }
            Err(Error::Singular { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        scan.push((p, rho));
        if rho.is_infinite() {
            return Ok(OrderSelection {
                order: p,
                rho_scan: scan,
                warning: None,
            });
        }
        p += 2;
    }
    let last = scan.last().map(|s| s.0).unwrap_or(2);
    if scan.len() == 1 {
        return Ok(OrderSelection {
            order: scan[0].0,
            rho_scan: scan,
            warning: None,
        });
    }
    let gate = 1.0 + ORDER_PROMINENCE;
    for j in 0..scan.len() - 1 {
        let rho = scan[j].1;
        let left_ok = j == 0 || rho >= gate * scan[j - 1].1;
        let right_ok = rho >= gate * scan[j + 1].1;
        if left_ok && right_ok {
            return Ok(OrderSelection {
                order: scan[j].0,
                rho_scan: scan,
                warning: None,
            });
        }
    }
    Ok(OrderSelection {
        order: last,
        rho_scan: scan,
        warning: Some(Warning::NoOrderMaximum { order: last }),
    })
}

/// Roots of both axes from the marginals of the mean-removed region.
#[derive(Debug, Clone)]
pub struct LsEstimate {
    pub x: LsSolution,
    pub y: LsSolution,
    pub zx: ResonanceRoots,
    pub zy: ResonanceRoots,
}

/// Symmetric (`symmetric = true`) or plain LS estimate of orders `(p, q)`
/// from the marginals of one `(p+1) x (q+1)` 2D correlation matrix.
pub fn estimate_ls(region: &ImagePlane, p: usize, q: usize, symmetric: bool) -> Result<LsEstimate> {
    let mean = region.mean();
    let centered = region.map(|v| v - mean);
    let r2 = correlation_2d(&centered, p + 1, q + 1)?;
    let marg = marginal_correlations(&r2);
    let solve = if symmetric {
        ls_symmetric_coefficients
    } else {
        ls_coefficients
    };
    let x = solve(&marg.rx)?;
    let y = solve(&marg.ry)?;
    let zx = x.roots()?;
    let zy = y.roots()?;
    Ok(LsEstimate { x, y, zx, zy })
}
