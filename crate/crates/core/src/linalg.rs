//! Small dense helpers shared by the estimators and the filter designer.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Relative singular-value cutoff for pseudoinverses.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Moore–Penrose pseudoinverse by SVD, discarding singular values below
/// `PINV_CUTOFF * sigma_max`. Returns the inverse and `sigma_max / sigma_min`
/// over all singular values (infinite when one vanishes).
pub fn pinv_complex(m: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64)> {
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("pseudoinverse input"));
    }
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^H");
    let (rows, cols) = m.shape();
    let mut out = DMatrix::<Complex64>::zeros(cols, rows);
    for (j, &s) in sv.iter().enumerate() {
        if s <= PINV_CUTOFF * smax || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        // out += v_j * inv * u_j^H
        for c in 0..cols {
            let vj = vt[(j, c)].conj() * inv;
            for r in 0..rows {
                out[(c, r)] += vj * u[(r, j)].conj();
            }
        }
    }
    Ok((out, condition))
}

/// Inverse of a real square matrix by LU, rejecting condition numbers
/// above `max_condition` (estimated by SVD).
pub fn inverse_checked(
    m: &DMatrix<f64>,
    max_condition: f64,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::Singular { context, condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { context, condition })
}

/// Solve `m x = b` after the same condition check as [`inverse_checked`].
pub fn solve_checked(
    m: &DMatrix<f64>,
    b: &DMatrix<f64>,
    max_condition: f64,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::Singular { context, condition });
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or(Error::Singular { context, condition })
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

/// Evaluate `c[0] + c[1] z + ... + c[n] z^n` by Horner's rule.
pub fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Coefficients (ascending powers) of the Lagrange basis polynomial that is
/// one at `roots[index]` and zero at every other root. These are the rows of
/// the inverse of the square Vandermonde matrix `[z_i^t]`.
pub fn lagrange_basis(roots: &[Complex64], index: usize) -> Result<Vec<Complex64>> {
    let node = roots[index];
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    let mut scale = Complex64::new(1.0, 0.0);
    for (j, &z) in roots.iter().enumerate() {
        if j == index {
            continue;
        }
        // multiply by (x - z)
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (t, &c) in coeffs.iter().enumerate() {
            next[t + 1] += c;
            next[t] -= c * z;
        }
        coeffs = next;
        scale *= node - z;
    }
    if scale.norm() < 1e-300 || !scale.re.is_finite() || !scale.im.is_finite() {
        return Err(Error::RankDeficientBasis {
            condition: f64::INFINITY,
        });
    }
    let inv = scale.inv();
    Ok(coeffs.into_iter().map(|c| c * inv).collect())
}
