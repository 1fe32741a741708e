use serde::{Deserialize, Serialize};

use super::{ratio, MetricsError};
use crate::polygon::PolygonAnnotation;
use crate::raster::{label_components, BinaryMask};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "TP")]
    Tp,
    /// A miss, tallied as one false negative and one false positive.
    #[serde(rename = "FN_FP")]
    FnFp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtMatch {
    pub gt_index: usize,
    pub gt_area: usize,
    pub merged_pred_area: usize,
    pub intersection: usize,
    pub iou: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatchOutcome {
    pub per_gt: Vec<GtMatch>,
    /// Predicted components that touch no ground-truth polygon.
    pub unmatched_pred_fps: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventScores {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
}

pub(crate) fn check_threshold(t: f64) -> Result<(), MetricsError> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(MetricsError::Threshold(t))
    }
}

pub(crate) fn check_polygons(polygons: &[PolygonAnnotation], width: u32, height: u32) -> Result<(), MetricsError> {
    let (w, h) = (f64::from(width), f64::from(height));
    for (index, p) in polygons.iter().enumerate() {
        let inside = p
            .vertices
            .iter()
            .all(|v| v[0].is_finite() && v[1].is_finite() && (0.0..=w).contains(&v[0]) && (0.0..=h).contains(&v[1]));
        if !inside {
            return Err(MetricsError::PolygonOutOfBounds { index, width, height });
        }
    }
    Ok(())
}

pub(crate) fn verdict(iou: f64, threshold: f64) -> Verdict {
    if iou > threshold {
        Verdict::Tp
    } else {
        Verdict::FnFp
    }
}

pub(crate) fn iou_of(intersection: usize, gt_area: usize, merged: usize) -> f64 {
    let union = gt_area + merged - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Event-level matching of a predicted change map against ground-truth polygons.
///
/// Predicted events are the 8-connected components of `pred`. For each
/// polygon, every component that shares at least one pixel with its mask is
/// merged, and the merged mask's IoU with the polygon decides the verdict
/// (`iou > threshold`). A component may join several merges. Components
/// touching no polygon count as one false positive each.
///
/// Degenerate polygons have an empty mask and always miss.
pub fn event_match(
    pred: &BinaryMask,
    gt_polygons: &[PolygonAnnotation],
    threshold: f64,
) -> Result<EventMatchOutcome, MetricsError> {
    check_threshold(threshold)?;
    let (w, h) = pred.dims();
    check_polygons(gt_polygons, w, h)?;
    let labeling = label_components(pred);
    let n = labeling.components.len();
    let mut touched_any = vec![false; n + 1];
    let mut stamp = vec![usize::MAX; n + 1];
    let mut per_gt = Vec::with_capacity(gt_polygons.len());

    for (gt_index, polygon) in gt_polygons.iter().enumerate() {
        let (mut gt_area, mut intersection, mut merged) = (0usize, 0usize, 0usize);
        if polygon.len() >= 3 && polygon.raster_area() > 0 {
            for span in polygon.spans(w, h) {
                gt_area += (span.x1 - span.x0) as usize;
                let row = span.y as usize * w as usize;
                for &label in &labeling.labels[row + span.x0 as usize..row + span.x1 as usize] {
                    if label == 0 {
                        continue;
                    }
                    intersection += 1;
                    let l = label as usize;
                    if stamp[l] != gt_index {
                        stamp[l] = gt_index;
                        touched_any[l] = true;
                        merged += labeling.components[l - 1].pixel_count;
                    }
                }
            }
        }
        let iou = iou_of(intersection, gt_area, merged);
        per_gt.push(GtMatch {
            gt_index,
            gt_area,
            merged_pred_area: merged,
            intersection,
            iou,
            verdict: verdict(iou, threshold),
        });
    }
    let unmatched_pred_fps = touched_any[1..].iter().filter(|t| !**t).count();
    Ok(EventMatchOutcome { per_gt, unmatched_pred_fps, threshold })
}

impl EventMatchOutcome {
    pub fn tp(&self) -> u64 {
        self.per_gt.iter().filter(|g| g.verdict == Verdict::Tp).count() as u64
    }

    pub fn misses(&self) -> u64 {
        self.per_gt.len() as u64 - self.tp()
    }
}

pub fn event_scores(o: &EventMatchOutcome) -> EventScores {
    tally_scores(o.tp(), o.unmatched_pred_fps as u64 + o.misses(), o.misses())
}

pub(crate) fn tally_scores(tp: u64, fp: u64, fn_: u64) -> EventScores {
    let empty = tp == 0 && fp == 0 && fn_ == 0;
    EventScores { tp, fp, fn_, precision: ratio(tp, tp + fp, empty), recall: ratio(tp, tp + fn_, empty) }
}
