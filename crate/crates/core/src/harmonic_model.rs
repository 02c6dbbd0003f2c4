//! Eigen-harmonic texture model.
//!
//! Rows of a texture are indexed by `i` (the x direction), columns by `k`
//! (the y direction). A texture of `P x Q` modes is
//!
//! ```text
//! d[i][k] = Re( sum_{m,n} A[m][n] * zx[m]^i * zy[n]^k )
//! ```
//!
//! The x roots are the eigenvalues of the linear shift operator (companion
//! matrix) of the x characteristic polynomial, likewise for y.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{pinv_complex, poly_eval};
use crate::{Error, ImagePlane, Result, Warning};

/// Seed used by [`synth_texture`] callers that do not care about the noise
/// realization.
pub const DEFAULT_SEED: u64 = 0x5EED_1A2B;

/// Coefficients `a_1..a_P` of the characteristic polynomial `1 + sum a_i z^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCoeffs {
    a: Vec<f64>,
}

impl PolynomialCoeffs {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::EmptyCoefficients);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("polynomial coefficients"));
        }
        Ok(Self { a })
    }

    /// Palindromic polynomial whose roots are `exp(±i 2π f)` for each `f`,
    /// i.e. the product of `1 - 2cos(2πf) z + z^2`.
    pub fn from_frequencies(freqs: &[f64]) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::EmptyCoefficients);
        }
        let mut full = vec![1.0];
        for &f in freqs {
            let c = -2.0 * libm::cos(2.0 * PI * f);
            let mut next = vec![0.0; full.len() + 2];
            for (t, &v) in full.iter().enumerate() {
                next[t] += v;
                next[t + 1] += c * v;
                next[t + 2] += v;
            }
            full = next;
        }
        Self::new(full[1..].to_vec())
    }

    /// Palindromic polynomial of even order `2h` from its free half
    /// `a_1..a_h`; `a_{2h} = 1` and `a_i = a_{2h-i}` hold exactly.
    pub fn palindromic_from_half(half: &[f64]) -> Result<Self> {
        if half.is_empty() {
            return Err(Error::EmptyCoefficients);
        }
        let h = half.len();
        let p = 2 * h;
        let mut a = vec![0.0; p];
        for i in 1..=h {
            a[i - 1] = half[i - 1];
            if i < h {
                a[p - i - 1] = half[i - 1];
            }
        }
        a[p - 1] = 1.0;
        Self::new(a)
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    /// Ascending coefficients `[1, a_1, ..., a_P]`.
    pub fn full(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.a.len() + 1);
        out.push(1.0);
        out.extend_from_slice(&self.a);
        out
    }

    /// `a_P = 1` and `a_i = a_{P-i}` exactly, `P` even.
    pub fn is_palindromic(&self) -> bool {
        let p = self.a.len();
        if p % 2 != 0 || self.a[p - 1] != 1.0 {
            return false;
        }
        (1..p / 2).all(|i| self.a[i - 1] == self.a[p - i - 1])
    }

    /// Value of `1 + sum a_i z^i`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        poly_eval(&self.full(), z)
    }

    /// Drop vanishing trailing coefficients.
    fn reduced(&self) -> Result<&[f64]> {
        let scale = self.a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut p = self.a.len();
        while p > 0 && self.a[p - 1].abs() <= 1e-14 * scale {
            p -= 1;
        }
        if p == 0 {
            return Err(Error::DegeneratePolynomial);
        }
        Ok(&self.a[..p])
    }
}

/// Linear shift operator: ones on the superdiagonal, last row
/// `(-a_P, -a_{P-1}, ..., -a_1)`.
pub fn companion_matrix(coeffs: &PolynomialCoeffs) -> DMatrix<f64> {
    let a = coeffs.as_slice();
    let p = a.len();
    let mut k = DMatrix::zeros(p, p);
    for r in 0..p.saturating_sub(1) {
        k[(r, r + 1)] = 1.0;
    }
    for c in 0..p {
        k[(p - 1, c)] = -a[p - 1 - c];
    }
    k
}

/// Eigenvalues of the shift operator. These are the modes the operator
/// propagates; for palindromic coefficients they coincide with the roots of
/// the characteristic polynomial.
pub fn shift_eigenvalues(coeffs: &PolynomialCoeffs) -> Result<ResonanceRoots> {
    let a = coeffs.reduced()?;
    let reduced = PolynomialCoeffs { a: a.to_vec() };
    let eig = companion_matrix(&reduced).complex_eigenvalues();
    let roots: Vec<Complex64> = eig.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("companion eigenvalues"));
    }
    Ok(ResonanceRoots::new(roots))
}

/// Roots of `1 + sum a_i z^i`, from the companion eigenvalues `λ` as `1/λ`
/// (the shift operator's characteristic polynomial is the reversed one).
pub fn polynomial_roots(coeffs: &PolynomialCoeffs, project: bool) -> Result<ResonanceRoots> {
    let eig = shift_eigenvalues(coeffs)?;
    let roots = eig.as_slice().iter().map(|z| z.inv()).collect();
    let roots = ResonanceRoots::new(roots);
    Ok(if project { roots.projected() } else { roots })
}

/// Complex resonance roots `z_i`, with `z = exp(i 2π f)` on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceRoots {
    roots: Vec<Complex64>,
}

impl ResonanceRoots {
    pub fn new(roots: Vec<Complex64>) -> Self {
        Self { roots }
    }

    /// Unit-modulus roots at the given frequencies (cycles per pixel).
    pub fn from_frequencies(freqs: &[f64]) -> Self {
        Self::new(
            freqs
                .iter()
                .map(|&f| Complex64::from_polar(1.0, 2.0 * PI * f))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.roots
    }

    /// `arg(z) / 2π` in `(-0.5, 0.5]`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.roots.iter().map(|z| z.arg() / (2.0 * PI)).collect()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.roots.iter().map(|z| z.norm()).collect()
    }

    /// `|z| - 1` per root.
    pub fn dampings(&self) -> Vec<f64> {
        self.roots.iter().map(|z| z.norm() - 1.0).collect()
    }

    /// Roots moved radially onto the unit circle. Zero roots are left alone.
    pub fn projected(&self) -> Self {
        Self::new(
            self.roots
                .iter()
                .map(|&z| {
                    let r = z.norm();
                    if r > 0.0 {
                        z / r
                    } else {
                        z
                    }
                })
                .collect(),
        )
    }

    /// Every root has a conjugate partner within `tol`.
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        let mut used = vec![false; self.roots.len()];
        for i in 0..self.roots.len() {
            if used[i] {
                continue;
            }
            let target = self.roots[i].conj();
            if (self.roots[i] - target).norm() < tol {
                used[i] = true;
                continue;
            }
            let partner = (0..self.roots.len())
                .filter(|&j| j != i && !used[j])
                .find(|&j| (self.roots[j] - target).norm() < tol);
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }

    /// Merge roots closer than `tol` (keeps the first of each cluster).
    pub fn dedup(&self, tol: f64) -> Self {
        let mut out: Vec<Complex64> = Vec::with_capacity(self.roots.len());
        for &z in &self.roots {
            if !out.iter().any(|w| (w - z).norm() < tol) {
                out.push(z);
            }
        }
        Self::new(out)
    }

    /// Keep only roots with `|ln|z|| <= max_log_modulus`. Subspace
    /// estimators with more vectors than signal modes return extra, strongly
    /// damped roots that carry no texture.
    pub fn near_unit(&self, max_log_modulus: f64) -> Self {
        Self::new(
            self.roots
                .iter()
                .copied()
                .filter(|z| {
                    let r = z.norm();
                    r > 0.0 && libm::log(r).abs() <= max_log_modulus
                })
                .collect(),
        )
    }

    /// Keep the least damped root of every group closer than `min_separation`
    /// cycles in frequency. Roots that close cannot be told apart on a short
    /// region and make the Lagrange basis ill-conditioned.
    pub fn resolvable(&self, min_separation: f64) -> Self {
        let mut v = self.roots.clone();
        let damping = |z: &Complex64| libm::log(z.norm()).abs();
        v.sort_by(|a, b| {
            damping(a)
                .partial_cmp(&damping(b))
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        let freq = |z: &Complex64| z.arg() / (2.0 * PI);
        let mut out: Vec<Complex64> = Vec::with_capacity(v.len());
        for z in v {
            let f = freq(&z);
            let close = out.iter().any(|w| {
                let d = libm::fabs(freq(w) - f) % 1.0;
                d.min(1.0 - d) < min_separation
            });
            if !close {
                out.push(z);
            }
        }
        Self::new(out)
    }

    /// Roots sorted by frequency, then modulus. Gives a canonical order for
    /// reports.
    pub fn sorted(&self) -> Self {
        let mut v = self.roots.clone();
        v.sort_by(|a, b| {
            let fa = a.arg();
            let fb = b.arg();
            fa.partial_cmp(&fb)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(
                    a.norm()
                        .partial_cmp(&b.norm())
                        .unwrap_or(core::cmp::Ordering::Equal),
                )
        });
        Self::new(v)
    }

    /// Index of the root nearest `z = 1`, if within `tol`.
    pub fn dc_index(&self, tol: f64) -> Option<usize> {
        let one = Complex64::new(1.0, 0.0);
        self.roots
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - one).norm()))
            .filter(|&(_, d)| d < tol)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal))
            .map(|(i, _)| i)
    }
}

/// `n x P` matrix with entry `(t, i) = z_i^t`.
pub fn vandermonde(roots: &ResonanceRoots, n: usize) -> Result<DMatrix<Complex64>> {
    let p = roots.len();
    if n < p || p == 0 {
        return Err(Error::UnderdeterminedBasis { rows: n, roots: p });
    }
    let mut v = DMatrix::zeros(n, p);
    for (i, &z) in roots.as_slice().iter().enumerate() {
        let mut w = Complex64::new(1.0, 0.0);
        for t in 0..n {
            v[(t, i)] = w;
            w *= z;
        }
    }
    Ok(v)
}

/// Bases whose condition number exceeds this are treated as rank deficient.
pub const MAX_BASIS_CONDITION: f64 = 1e12;

/// Least-squares spectrum of a region together with its fit residual.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub amplitudes: DMatrix<Complex64>,
    /// Root-mean-square of `region - reconstruct(A)`.
    pub residual_rms: f64,
    pub residual_max: f64,
}

/// `A = Zx# · region · (Zy#)^T` over overdetermined Vandermonde bases.
pub fn spectrum(region: &ImagePlane, zx: &ResonanceRoots, zy: &ResonanceRoots) -> Result<Spectrum> {
    let (nx, ny) = region.shape();
    let vx = vandermonde(zx, nx)?;
    let vy = vandermonde(zy, ny)?;
    let (px, cx) = pinv_complex(&vx)?;
    let (py, cy) = pinv_complex(&vy)?;
    let condition = cx.max(cy);
    if !(condition <= MAX_BASIS_CONDITION) {
        return Err(Error::RankDeficientBasis { condition });
    }
    let x = region.to_matrix().map(|v| Complex64::new(v, 0.0));
    let amplitudes = &px * x * py.transpose();
    let fit = &vx * &amplitudes * vy.transpose();
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for i in 0..nx {
        for k in 0..ny {
            let r = region.get(i, k) - fit[(i, k)].re;
            sum += r * r;
            max = max.max(r.abs());
        }
    }
    Ok(Spectrum {
        amplitudes,
        residual_rms: libm::sqrt(sum / (nx * ny).max(1) as f64),
        residual_max: max,
    })
}

/// Eigen-harmonic decomposition of a texture.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicModel {
    pub zx: ResonanceRoots,
    pub zy: ResonanceRoots,
    pub amplitudes: DMatrix<Complex64>,
}

/// Real reconstruction plus the largest discarded imaginary part.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub plane: ImagePlane,
    pub imag_residue: f64,
}

impl HarmonicModel {
    pub fn new(
        zx: ResonanceRoots,
        zy: ResonanceRoots,
        amplitudes: DMatrix<Complex64>,
    ) -> Result<Self> {
        if amplitudes.shape() != (zx.len(), zy.len()) {
            return Err(Error::DimensionMismatch(alloc::format!(
                "amplitudes {:?} for {} x {} roots",
                amplitudes.shape(),
                zx.len(),
                zy.len()
            )));
        }
        Ok(Self { zx, zy, amplitudes })
    }

    /// Fit amplitudes for the given roots on `region`.
    pub fn fit(
        region: &ImagePlane,
        zx: ResonanceRoots,
        zy: ResonanceRoots,
    ) -> Result<(Self, Spectrum)> {
        let s = spectrum(region, &zx, &zy)?;
        Ok((
            Self {
                zx,
                zy,
                amplitudes: s.amplitudes.clone(),
            },
            s,
        ))
    }

    pub fn order(&self) -> (usize, usize) {
        (self.zx.len(), self.zy.len())
    }

    /// Drop roots whose whole amplitude line stays below `rel_tol * max|A|`
    /// and refit the rest on `region`.
    pub fn prune_weak(&self, region: &ImagePlane, rel_tol: f64) -> Result<Self> {
        let max = self.amplitudes.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let thr = rel_tol * max;
        let (p, q) = self.amplitudes.shape();
        let zx = (0..p)
            .filter(|&m| (0..q).any(|n| self.amplitudes[(m, n)].norm() >= thr))
            .map(|m| self.zx.as_slice()[m])
            .collect();
        let zy = (0..q)
            .filter(|&n| (0..p).any(|m| self.amplitudes[(m, n)].norm() >= thr))
            .map(|n| self.zy.as_slice()[n])
            .collect();
        Ok(Self::fit(region, ResonanceRoots::new(zx), ResonanceRoots::new(zy))?.0)
    }

    /// Rows (`'x'`) or columns (`'y'`) of `A` whose entries are all below
    /// `rel_tol * max|A|`. An order matched to the texture leaves none.
    pub fn zero_lines(&self, rel_tol: f64) -> Vec<Warning> {
        let max = self.amplitudes.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let thr = rel_tol * max;
        let (p, q) = self.amplitudes.shape();
        let mut out = Vec::new();
        for m in 0..p {
            if (0..q).all(|n| self.amplitudes[(m, n)].norm() <= thr) {
                out.push(Warning::ZeroAmplitudeLine {
                    axis: 'x',
                    index: m,
                });
            }
        }
        for n in 0..q {
            if (0..p).all(|m| self.amplitudes[(m, n)].norm() <= thr) {
                out.push(Warning::ZeroAmplitudeLine {
                    axis: 'y',
                    index: n,
                });
            }
        }
        out
    }

    /// `d[i][k] = Re(sum A[m][n] zx[m]^i zy[n]^k)` on an `nx x ny` grid.
    pub fn reconstruct(&self, nx: usize, ny: usize) -> Result<Reconstruction> {
        let vx = powers(&self.zx, nx);
        let vy = powers(&self.zy, ny);
        let full = vx * &self.amplitudes * vy.transpose();
        let mut imag: f64 = 0.0;
        let plane = ImagePlane::from_fn(nx, ny, |i, k| {
            let v = full[(i, k)];
            imag = imag.max(v.im.abs());
            v.re
        });
        Ok(Reconstruction {
            plane,
            imag_residue: imag,
        })
    }
}

fn powers(roots: &ResonanceRoots, n: usize) -> DMatrix<Complex64> {
    let mut v = DMatrix::zeros(n, roots.len());
    for (i, &z) in roots.as_slice().iter().enumerate() {
        let mut w = Complex64::new(1.0, 0.0);
        for t in 0..n {
            v[(t, i)] = w;
            w *= z;
        }
    }
    v
}

/// `P x Q` texture kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureKernel {
    pub b: DMatrix<f64>,
}

impl TextureKernel {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("texture kernel"));
        }
        Ok(Self { b })
    }
}

/// `B^{t,τ} = Kx^t · B · (Ky^τ)^T`.
pub fn shift_kernel(
    kernel: &TextureKernel,
    coeffs_x: &PolynomialCoeffs,
    coeffs_y: &PolynomialCoeffs,
    t: u32,
    tau: u32,
) -> Result<TextureKernel> {
    let (p, q) = kernel.b.shape();
    if coeffs_x.order() != p || coeffs_y.order() != q {
        return Err(Error::DimensionMismatch(alloc::format!(
            "kernel {p}x{q} with operator orders {}x{}",
            coeffs_x.order(),
            coeffs_y.order()
        )));
    }
    let kx = matrix_power(&companion_matrix(coeffs_x), t);
    let ky = matrix_power(&companion_matrix(coeffs_y), tau);
    TextureKernel::new(kx * &kernel.b * ky.transpose())
}

fn matrix_power(m: &DMatrix<f64>, mut e: u32) -> DMatrix<f64> {
    let mut base = m.clone();
    let mut acc = DMatrix::identity(m.nrows(), m.ncols());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    acc
}

/// One real 2D harmonic `amplitude * cos(2π(fx i + fy k) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub fx: f64,
    pub fy: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn new(fx: f64, fy: f64, amplitude: f64, phase: f64) -> Self {
        Self {
            fx,
            fy,
            amplitude,
            phase,
        }
    }
}

fn wrap_frequency(f: f64) -> f64 {
    let mut w = f - libm::floor(f);
    if w > 0.5 {
        w -= 1.0;
    }
    w
}

/// Sum of real 2D harmonics plus white Gaussian noise of standard deviation
/// `noise_sigma`, drawn from ChaCha8 seeded with `seed` in row-major order.
pub fn synth_texture(
    components: &[Harmonic],
    rows: usize,
    cols: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<ImagePlane> {
    const TOL: f64 = 1e-12;
    for (j, h) in components.iter().enumerate() {
        let ok = |f: f64| f > -0.5 && f <= 0.5;
        if !ok(h.fx) || !ok(h.fy) || !h.amplitude.is_finite() || !h.phase.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "harmonic ({}, {}) outside (-0.5, 0.5]",
                h.fx,
                h.fy
            )));
        }
        for g in &components[..j] {
            let same = |a: f64, b: f64| libm::fabs(wrap_frequency(a - b)) < TOL;
            if (same(h.fx, g.fx) && same(h.fy, g.fy)) || (same(h.fx, -g.fx) && same(h.fy, -g.fy)) {
                return Err(Error::AliasedFrequency { fx: h.fx, fy: h.fy });
            }
        }
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument("negative noise sigma".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ImagePlane::from_fn(rows, cols, |i, k| {
        let mut v = 0.0;
        for h in components {
            v += h.amplitude * libm::cos(2.0 * PI * (h.fx * i as f64 + h.fy * k as f64) + h.phase);
        }
        if noise_sigma > 0.0 {
            let n: f64 = StandardNormal.sample(&mut rng);
            v += noise_sigma * n;
        }
        v
    }))
}
