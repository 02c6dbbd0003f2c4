use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// One real-valued channel, row-major. Row index is `x` (i), column index
/// is `y` (k).
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} samples for a {rows}x{cols} plane",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for k in 0..cols {
                data.push(f(i, k));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, k| m[(i, k)])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[i * self.cols + k] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copy of the `rows x cols` window starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Self> {
        if row + rows > self.rows || col + cols > self.cols {
            return Err(Error::WindowTooLarge {
                window: (row + rows, col + cols),
                image: self.shape(),
            });
        }
        Ok(Self::from_fn(rows, cols, |i, k| self.get(row + i, col + k)))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Channels of one image (one plane for grayscale, three for RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    channels: Vec<ImagePlane>,
}

impl ImageStack {
    pub fn new(channels: Vec<ImagePlane>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::InvalidArgument(
                "image stack without channels".into(),
            ));
        };
        let shape = first.shape();
        if channels.iter().any(|c| c.shape() != shape) {
            return Err(Error::DimensionMismatch("channel shapes differ".into()));
        }
        Ok(Self { channels })
    }

    pub fn gray(plane: ImagePlane) -> Self {
        Self {
            channels: vec![plane],
        }
    }

    pub fn channels(&self) -> &[ImagePlane] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &ImagePlane {
        &self.channels[c]
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    /// Channel average, used where a single gray plane is needed.
    pub fn to_gray(&self) -> ImagePlane {
        let (rows, cols) = self.shape();
        let n = self.channels.len() as f64;
        ImagePlane::from_fn(rows, cols, |i, k| {
            self.channels.iter().map(|c| c.get(i, k)).sum::<f64>() / n
        })
    }

    pub fn into_channels(self) -> Vec<ImagePlane> {
        self.channels
    }
}

/// Boolean raster with the same indexing as [`ImagePlane`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for k in 0..cols {
                bits.push(f(i, k));
            }
        }
        Self { rows, cols, bits }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> bool {
        self.bits[i * self.cols + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: bool) {
        self.bits[i * self.cols + k] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn or(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}
