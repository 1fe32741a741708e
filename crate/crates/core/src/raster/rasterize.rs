use log::warn;

use super::{BinaryMask, RasterError};
use crate::polygon::PolygonAnnotation;

/// Even-odd, pixel-center rasterization of `polygon` onto a `width x height`
/// grid. Parts outside the grid are clipped.
///
/// A polygon with zero rasterized area of its own is logged and produces an
/// empty mask; a polygon that merely lies outside the grid is not.
pub fn rasterize_polygon(polygon: &PolygonAnnotation, width: u32, height: u32) -> Result<BinaryMask, RasterError> {
    let mut mask = BinaryMask::new(width, height)?;
    paint(&mut mask, polygon);
    Ok(mask)
}

/// Union of the rasterizations of `polygons`.
pub fn rasterize_polygons(polygons: &[PolygonAnnotation], width: u32, height: u32) -> Result<BinaryMask, RasterError> {
    let mut mask = BinaryMask::new(width, height)?;
    for polygon in polygons {
        paint(&mut mask, polygon);
    }
    Ok(mask)
}

fn paint(mask: &mut BinaryMask, polygon: &PolygonAnnotation) {
    if polygon.len() < 3 || polygon.raster_area() == 0 {
        warn!("degenerate polygon with {} vertices has zero rasterized area", polygon.len());
        return;
    }
    let (w, h) = mask.dims();
    for span in polygon.spans(w, h) {
        for x in span.x0..span.x1 {
            mask.set(x, span.y, true);
        }
    }
}
