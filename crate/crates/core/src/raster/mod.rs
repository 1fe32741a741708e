//! Dense 2D rasters: binary change masks, float score fields and 8-bit RGB
//! frames, plus the primitives built on them.

mod components;
mod io;
mod rasterize;
mod resample;

pub use components::{connected_components, label_components, Component, Labeling};
pub use io::{
    decode_float, decode_mask, decode_raster, decode_rgb_png, encode_float, encode_mask_png, encode_raster,
    encode_rgb_png, DecodedRaster, FR32_MAGIC,
};
pub use rasterize::{rasterize_polygon, rasterize_polygons};
pub use resample::upsample_bilinear;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("raster dimensions {width}x{height} overflow addressable memory")]
    DimensionOverflow { width: u32, height: u32 },
    #[error("expected {expected} values for the declared size, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("truncated raster file: need {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("unrecognized raster format (bad magic)")]
    BadMagic,
    #[error("unsupported PNG layout: {0}")]
    UnsupportedPng(String),
    #[error("PNG decode failed: {0}")]
    PngDecode(String),
    #[error("PNG encode failed: {0}")]
    PngEncode(String),
}

pub(crate) fn checked_len(width: u32, height: u32) -> Result<usize, RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyDimensions { width, height });
    }
    (width as usize)
        .checked_mul(height as usize)
        .filter(|n| *n <= isize::MAX as usize / 4)
        .ok_or(RasterError::DimensionOverflow { width, height })
}

/// A binary change map; `true` marks a changed pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Result<Self, RasterError> {
        let len = checked_len(width, height)?;
        Ok(Self { width, height, bits: vec![false; len] })
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        let expected = checked_len(width, height)?;
        if bits.len() != expected {
            return Err(RasterError::LengthMismatch { expected, actual: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self, RasterError> {
        let mut mask = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                mask.bits[(y * width + x) as usize] = f(x, y);
            }
        }
        Ok(mask)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Pixelwise OR with a mask of equal size.
    pub fn union_with(&mut self, other: &BinaryMask) -> Result<(), RasterError> {
        ensure_same_dims(self.dims(), other.dims())?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        Ok(())
    }

    /// Copy of the sub-rectangle `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, RasterError> {
        let (w, h) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
        let mut bits = Vec::with_capacity(checked_len(w, h)?);
        for y in y0..y1 {
            let row = y as usize * self.width as usize;
            bits.extend_from_slice(&self.bits[row + x0 as usize..row + x1 as usize]);
        }
        Self::from_bits(w, h, bits)
    }
}

/// A dense field of finite 32-bit scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatRaster {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl FloatRaster {
    /// Fails on a length mismatch or any NaN or infinity.
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, RasterError> {
        let expected = checked_len(width, height)?;
        if values.len() != expected {
            return Err(RasterError::LengthMismatch { expected, actual: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Result<Self, RasterError> {
        let len = checked_len(width, height)?;
        Self::new(width, height, vec![value; len])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Result<Self, RasterError> {
        let len = checked_len(width, height)?;
        let mut values = Vec::with_capacity(len);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Applies `f` elementwise; the result is re-validated.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self, RasterError> {
        Self::new(self.width, self.height, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }

    /// Population mean and standard deviation, accumulated in f64.
    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let mean = self.values.iter().map(|v| f64::from(*v)).sum::<f64>() / n;
        let var = self.values.iter().map(|v| (f64::from(*v) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, RasterError> {
        let (w, h) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
        let mut values = Vec::with_capacity(checked_len(w, h)?);
        for y in y0..y1 {
            let row = y as usize * self.width as usize;
            values.extend_from_slice(&self.values[row + x0 as usize..row + x1 as usize]);
        }
        Self::new(w, h, values)
    }
}

/// An 8-bit RGB frame, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        let expected =
            checked_len(width, height)?.checked_mul(3).ok_or(RasterError::DimensionOverflow { width, height })?;
        if data.len() != expected {
            return Err(RasterError::LengthMismatch { expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self, RasterError> {
        let mut data = Vec::with_capacity(checked_len(width, height)? * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

pub(crate) fn ensure_same_dims(left: (u32, u32), right: (u32, u32)) -> Result<(), RasterError> {
    if left != right {
        return Err(RasterError::DimensionMismatch { left, right });
    }
    Ok(())
}
