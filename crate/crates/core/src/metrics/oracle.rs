//! Reference event matcher built from explicit pixel sets. Slow; for tests.

use std::collections::BTreeSet;

use super::event::{check_polygons, check_threshold, iou_of, verdict, EventMatchOutcome, GtMatch};
use super::MetricsError;
use crate::polygon::PolygonAnnotation;
use crate::raster::BinaryMask;

pub const ORACLE_MAX_SIDE: u32 = 256;

type PixelSet = BTreeSet<(u32, u32)>;

fn flood_components(mask: &BinaryMask) -> Vec<PixelSet> {
    let (w, h) = mask.dims();
    let mut remaining: PixelSet =
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| mask.get(x, y)).collect();
    let mut out = Vec::new();
    while let Some(&seed) = remaining.iter().next() {
        remaining.remove(&seed);
        let mut comp = PixelSet::new();
        let mut stack = vec![seed];
        while let Some((x, y)) = stack.pop() {
            comp.insert((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let n = ((x as i64 + dx) as u32, (y as i64 + dy) as u32);
                    if remaining.remove(&n) {
                        stack.push(n);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Crossing-number test at the pixel center. Crossings are evaluated from
/// the lower endpoint of each edge.
fn contains_center(polygon: &PolygonAnnotation, x: u32, y: u32) -> bool {
    let (xc, yc) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
    let v = &polygon.vertices;
    let mut inside = false;
    for i in 0..v.len() {
        let (mut a, mut b) = (v[i], v[(i + 1) % v.len()]);
        if (a[1] > yc) == (b[1] > yc) {
            continue;
        }
        if a[1] > b[1] {
            std::mem::swap(&mut a, &mut b);
        }
        if xc < a[0] + (yc - a[1]) * (b[0] - a[0]) / (b[1] - a[1]) {
            inside = !inside;
        }
    }
    inside
}

fn gt_pixels(polygon: &PolygonAnnotation, w: u32, h: u32) -> PixelSet {
    if polygon.len() < 3 || polygon.raster_area() == 0 {
        return PixelSet::new();
    }
    (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| contains_center(polygon, x, y)).collect()
}

/// Same contract as [`event_match`](super::event_match), restricted to
/// rasters of at most 256x256.
pub fn brute_force_event_match(
    pred: &BinaryMask,
    gt_polygons: &[PolygonAnnotation],
    iou_threshold: f64,
) -> Result<EventMatchOutcome, MetricsError> {
    let (w, h) = pred.dims();
    if w > ORACLE_MAX_SIDE || h > ORACLE_MAX_SIDE {
        return Err(MetricsError::OracleTooLarge { width: w, height: h, max: ORACLE_MAX_SIDE });
    }
    check_threshold(iou_threshold)?;
    check_polygons(gt_polygons, w, h)?;
    let comps = flood_components(pred);
    let mut touched = vec![false; comps.len()];
    let mut per_gt = Vec::new();
    for (gt_index, polygon) in gt_polygons.iter().enumerate() {
        let gt = gt_pixels(polygon, w, h);
        let mut merged = PixelSet::new();
        for (i, c) in comps.iter().enumerate() {
            if !c.is_disjoint(&gt) {
                touched[i] = true;
                merged.extend(c.iter().copied());
            }
        }
        let intersection = merged.intersection(&gt).count();
        let union = merged.union(&gt).count();
        debug_assert_eq!(union, gt.len() + merged.len() - intersection);
        let iou = iou_of(intersection, gt.len(), merged.len());
        per_gt.push(GtMatch {
            gt_index,
            gt_area: gt.len(),
            merged_pred_area: merged.len(),
            intersection,
            iou,
            verdict: verdict(iou, iou_threshold),
        });
    }
    let unmatched_pred_fps = touched.iter().filter(|t| !**t).count();
    Ok(EventMatchOutcome { per_gt, unmatched_pred_fps, threshold: iou_threshold })
}
