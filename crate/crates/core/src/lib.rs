//! Eigen-harmonic texture models and inverse resonance filtering.
//!
//! A texture patch is modelled as a finite sum of separable complex
//! exponentials `A[m][n] * zx[m]^i * zy[n]^k`. The resonance roots `zx`, `zy`
//! are estimated from correlation matrices of a base region, either with a
//! linear-symmetry (palindromic) prediction model or with a 2D matrix pencil
//! over the principal subspace of the 2D correlation matrix. The inverse
//! resonance filter built from those roots maps the texture onto a flat level,
//! so foreign objects show up as outliers of the filtered signal.
//!
//! Pipeline stages, one module each:
//!
//! 1. [`harmonic_model`]: shift operator, roots, Vandermonde bases, spectra.
//! 2. [`estimation_ls`]: correlation matrices and linear-symmetry estimators.
//! 3. [`estimation_pencil`]: SVD subspace, Sherman–Morrison Gram inverse, pencils.
//! 4. [`irf`]: filter design, convolution, 3σ detection.
//! 5. [`postfilters`]: components, histogram difference, binary correlation.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line live in the `irf-toolkit` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod estimation_ls;
pub mod estimation_pencil;
pub mod harmonic_model;
mod image;
pub mod irf;
pub mod linalg;
pub mod postfilters;

pub use error::{Error, Result, Warning};
pub use image::{BinaryRaster, ImagePlane, ImageStack};

pub use num_complex::Complex64;
