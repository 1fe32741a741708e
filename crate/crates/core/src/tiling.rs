//! Overlapping patch grids over large rasters, and the reductions that
//! stitch per-patch results back together.
//!
//! Patches advance by `patch - overlap`; the last row and column are shifted
//! inward so they end exactly at the image edge. No pixel is ever padded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, FloatRaster, RasterError};

pub const DEFAULT_PATCH: u32 = 1024;
pub const DEFAULT_OVERLAP: u32 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum TilingError {
    #[error("overlap {overlap} must be smaller than patch {patch}")]
    OverlapTooLarge { patch: u32, overlap: u32 },
    #[error("patch size must be at least 1")]
    ZeroPatch,
    #[error("image dimensions must be at least 1x1")]
    EmptyImage,
    #[error("expected {expected} patches, got {actual}")]
    PatchCount { expected: usize, actual: usize },
    #[error("patch {index} is {actual:?} but its rect is {expected:?}")]
    PatchShape { index: usize, expected: (u32, u32), actual: (u32, u32) },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width(), self.height())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub image_w: u32,
    pub image_h: u32,
    pub patch: u32,
    pub overlap: u32,
    /// Row-major.
    pub rects: Vec<Rect>,
}

pub(crate) fn axis_starts(len: u32, patch: u32, stride: u32) -> Vec<u32> {
    if len <= patch {
        return vec![0];
    }
    let last = len - patch;
    let mut starts: Vec<u32> = (0..).map(|k| k * stride).take_while(|s| *s < last).collect();
    starts.push(last);
    starts
}

pub fn plan_grid(image_w: u32, image_h: u32, patch: u32, overlap: u32) -> Result<PatchGrid, TilingError> {
    if patch == 0 {
        return Err(TilingError::ZeroPatch);
    }
    if overlap >= patch {
        return Err(TilingError::OverlapTooLarge { patch, overlap });
    }
    if image_w == 0 || image_h == 0 {
        return Err(TilingError::EmptyImage);
    }
    let stride = patch - overlap;
    let xs = axis_starts(image_w, patch, stride);
    let ys = axis_starts(image_h, patch, stride);
    let mut rects = Vec::with_capacity(xs.len() * ys.len());
    for &y0 in &ys {
        for &x0 in &xs {
            rects.push(Rect { x0, y0, x1: (x0 + patch).min(image_w), y1: (y0 + patch).min(image_h) });
        }
    }
    Ok(PatchGrid { image_w, image_h, patch, overlap, rects })
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn extract_float(&self, raster: &FloatRaster) -> Result<Vec<FloatRaster>, TilingError> {
        self.rects.iter().map(|r| raster.crop(r.x0, r.y0, r.x1, r.y1).map_err(TilingError::from)).collect()
    }

    pub fn extract_binary(&self, mask: &BinaryMask) -> Result<Vec<BinaryMask>, TilingError> {
        self.rects.iter().map(|r| mask.crop(r.x0, r.y0, r.x1, r.y1).map_err(TilingError::from)).collect()
    }

    fn check_shapes(&self, dims: impl ExactSizeIterator<Item = (u32, u32)>) -> Result<(), TilingError> {
        if dims.len() != self.rects.len() {
            return Err(TilingError::PatchCount { expected: self.rects.len(), actual: dims.len() });
        }
        for (index, (actual, rect)) in dims.zip(&self.rects).enumerate() {
            if actual != rect.dims() {
                return Err(TilingError::PatchShape { index, expected: rect.dims(), actual });
            }
        }
        Ok(())
    }
}

/// Each output pixel is the arithmetic mean of every patch value covering it.
/// Patches are reduced in grid order, so the result does not depend on the
/// order in which they were computed.
pub fn stitch_float(grid: &PatchGrid, patches: &[FloatRaster]) -> Result<FloatRaster, TilingError> {
    grid.check_shapes(patches.iter().map(FloatRaster::dims))?;
    let (w, h) = (grid.image_w as usize, grid.image_h as usize);
    let mut sum = vec![0f64; w * h];
    let mut count = vec![0u32; w * h];
    for (rect, patch) in grid.rects.iter().zip(patches) {
        let pw = rect.width() as usize;
        for (row, src) in patch.values().chunks_exact(pw).enumerate() {
            let start = (rect.y0 as usize + row) * w + rect.x0 as usize;
            for (i, v) in src.iter().enumerate() {
                sum[start + i] += f64::from(*v);
                count[start + i] += 1;
            }
        }
    }
    let values = sum.iter().zip(&count).map(|(s, c)| (s / f64::from(*c)) as f32).collect();
    Ok(FloatRaster::new(grid.image_w, grid.image_h, values)?)
}

/// Logical OR over covering patches.
pub fn stitch_binary(grid: &PatchGrid, patches: &[BinaryMask]) -> Result<BinaryMask, TilingError> {
    grid.check_shapes(patches.iter().map(BinaryMask::dims))?;
    let mut out = BinaryMask::new(grid.image_w, grid.image_h)?;
    for (rect, patch) in grid.rects.iter().zip(patches) {
        for y in 0..rect.height() {
            for x in 0..rect.width() {
                if patch.get(x, y) {
                    out.set(rect.x0 + x, rect.y0 + y, true);
                }
            }
        }
    }
    Ok(out)
}
