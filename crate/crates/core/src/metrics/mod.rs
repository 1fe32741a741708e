//! Pixel-wise and event-wise scoring of predicted change maps.

mod event;
mod oracle;
mod report;

pub use event::{event_match, event_scores, EventMatchOutcome, EventScores, GtMatch, Verdict, DEFAULT_IOU_THRESHOLD};
pub use oracle::{brute_force_event_match, ORACLE_MAX_SIDE};
pub use report::{
    aggregate, percent, render_csv, MetricsReport, PairEvaluation, PairRow, ScoreRow, CSV_HEADER, OVERALL,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ensure_same_dims, BinaryMask, RasterError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("IoU threshold must lie in [0, 1), got {0}")]
    Threshold(f64),
    #[error("ground-truth polygon {index} lies outside the {width}x{height} raster")]
    PolygonOutOfBounds { index: usize, width: u32, height: u32 },
    #[error("brute-force oracle is limited to {max}x{max}, got {width}x{height}")]
    OracleTooLarge { width: u32, height: u32, max: u32 },
    #[error("cannot aggregate an empty list of pair results")]
    EmptyAggregate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

/// `num / den`, with 0/0 resolved to 1.0 when nothing was predicted or
/// expected at all and 0.0 otherwise.
pub(crate) fn ratio(num: u64, den: u64, all_empty: bool) -> f64 {
    if den == 0 {
        if all_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn pixel_confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<Confusion, MetricsError> {
    ensure_same_dims(pred.dims(), gt.dims())?;
    let mut counts = [0u64; 4];
    for (p, g) in pred.bits().iter().zip(gt.bits()) {
        counts[(usize::from(*p) << 1) | usize::from(*g)] += 1;
    }
    Ok(Confusion { tn: counts[0], fn_: counts[1], fp: counts[2], tp: counts[3] })
}

pub fn pixel_scores(c: Confusion) -> PixelScores {
    let empty = c.tp == 0 && c.fp == 0 && c.fn_ == 0;
    PixelScores {
        precision: ratio(c.tp, c.tp + c.fp, empty),
        recall: ratio(c.tp, c.tp + c.fn_, empty),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, empty),
        iou: ratio(c.tp, c.tp + c.fp + c.fn_, empty),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn confusion(tp: u64, fp: u64, fn_: u64) -> Confusion {
        Confusion { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn perfect_and_empty_agreement() {
        let all_one = PixelScores { precision: 1.0, recall: 1.0, f1: 1.0, iou: 1.0 };
        assert_eq!(pixel_scores(confusion(10, 0, 0)), all_one);
        assert_eq!(pixel_scores(confusion(0, 0, 0)), all_one);
        let all_zero = PixelScores { precision: 0.0, recall: 0.0, f1: 0.0, iou: 0.0 };
        assert_eq!(pixel_scores(confusion(0, 0, 5)), all_zero);
        assert_eq!(pixel_scores(confusion(0, 3, 0)), all_zero);
    }

    #[test]
    fn worked_example() {
        let s = pixel_scores(confusion(6, 2, 4));
        assert_eq!(s.precision, 6.0 / 8.0);
        assert_eq!(s.recall, 6.0 / 10.0);
        assert_eq!(s.f1, 12.0 / 18.0);
        assert_eq!(s.iou, 0.5);
        assert!((s.f1 - 2.0 * s.iou / (1.0 + s.iou)).abs() < 1e-15);
    }

    #[test]
    fn confusion_examples() {
        let gt = BinaryMask::from_fn(8, 8, |x, y| y * 8 + x < 10).unwrap();
        assert_eq!(pixel_confusion(&gt, &gt).unwrap(), Confusion { tp: 10, fp: 0, fn_: 0, tn: 54 });
        let empty = BinaryMask::new(8, 8).unwrap();
        let c = pixel_confusion(&empty, &gt).unwrap();
        assert_eq!((c.tp, c.fn_), (0, 10));
        assert!(pixel_confusion(&empty, &BinaryMask::new(4, 8).unwrap()).is_err());
    }

    #[test]
    fn confusion_serializes_fn_field() {
        let json = serde_json::to_string(&confusion(1, 2, 3)).unwrap();
        assert_eq!(json, r#"{"tp":1,"fp":2,"fn":3,"tn":0}"#);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn confusion_matches_double_loop(w in 1u32..33, h in 1u32..33, a in proptest::collection::vec(any::<bool>(), 1024), b in proptest::collection::vec(any::<bool>(), 1024)) {
                let n = (w * h) as usize;
                let pred = BinaryMask::from_bits(w, h, a[..n].to_vec()).unwrap();
                let gt = BinaryMask::from_bits(w, h, b[..n].to_vec()).unwrap();
                let mut expected = Confusion::default();
                for y in 0..h {
                    for x in 0..w {
                        match (pred.get(x, y), gt.get(x, y)) {
                            (true, true) => expected.tp += 1,
                            (true, false) => expected.fp += 1,
                            (false, true) => expected.fn_ += 1,
                            (false, false) => expected.tn += 1,
                        }
                    }
                }
                prop_assert_eq!(pixel_confusion(&pred, &gt).unwrap(), expected);
                prop_assert_eq!(expected.tp + expected.fp + expected.fn_ + expected.tn, n as u64);
            }

            #[test]
            fn f1_iou_identity(tp in 0u64..100_000, fp in 0u64..100_000, fn_ in 0u64..100_000) {
                let s = pixel_scores(confusion(tp, fp, fn_));
                if tp + fp + fn_ > 0 {
                    prop_assert!((s.f1 - 2.0 * s.iou / (1.0 + s.iou)).abs() <= 1e-12);
                }
                for v in [s.precision, s.recall, s.f1, s.iou] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
