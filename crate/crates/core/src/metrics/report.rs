//! Dataset-level aggregation and the JSON/CSV report formats.
//!
//! Aggregation is micro: pixel confusions and event tallies are summed
//! before any ratio is taken. In every row, `precision` and `recall` are
//! event-wise while `f1` and `iou` are pixel-wise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::event::tally_scores;
use super::{
    event_match, event_scores, pixel_confusion, pixel_scores, Confusion, EventMatchOutcome, MetricsError, PixelScores,
};
use crate::polygon::PolygonAnnotation;
use crate::raster::{rasterize_polygons, BinaryMask};

pub const OVERALL: &str = "overall";
pub const CSV_HEADER: &str = "model,site,precision,recall,f1,iou,event_tp,event_fp,event_fn";

/// Scores for one annotated pair, ready for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub site: String,
    pub frame_a: u32,
    pub frame_b: u32,
    pub confusion: Confusion,
    pub outcome: EventMatchOutcome,
    pub missing_prediction: bool,
}

impl PairEvaluation {
    /// Pixel metrics against the union of `polygons`, event metrics per polygon.
    pub fn compute(
        site: &str,
        frame_a: u32,
        frame_b: u32,
        pred: &BinaryMask,
        polygons: &[PolygonAnnotation],
        iou_threshold: f64,
        missing_prediction: bool,
    ) -> Result<Self, MetricsError> {
        let outcome = event_match(pred, polygons, iou_threshold)?;
        let gt = rasterize_polygons(polygons, pred.width(), pred.height())?;
        let confusion = pixel_confusion(pred, &gt)?;
        Ok(Self { site: site.to_owned(), frame_a, frame_b, confusion, outcome, missing_prediction })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub site: String,
    pub pairs: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub event_tp: u64,
    pub event_fp: u64,
    pub event_fn: u64,
    pub pixel_precision: f64,
    pub pixel_recall: f64,
    pub confusion: Confusion,
}

impl ScoreRow {
    fn from_counts(site: &str, pairs: usize, confusion: Confusion, tp: u64, fp: u64, fn_: u64) -> Self {
        let px: PixelScores = pixel_scores(confusion);
        let ev = tally_scores(tp, fp, fn_);
        Self {
            site: site.to_owned(),
            pairs,
            precision: ev.precision,
            recall: ev.recall,
            f1: px.f1,
            iou: px.iou,
            event_tp: tp,
            event_fp: fp,
            event_fn: fn_,
            pixel_precision: px.precision,
            pixel_recall: px.recall,
            confusion,
        }
    }

    fn from_pairs<'a>(site: &str, pairs: impl IntoIterator<Item = &'a PairEvaluation>) -> Self {
        let (mut n, mut c, mut tp, mut fp, mut fn_) = (0, Confusion::default(), 0, 0, 0);
        for p in pairs {
            let s = event_scores(&p.outcome);
            n += 1;
            c = c + p.confusion;
            tp += s.tp;
            fp += s.fp;
            fn_ += s.fn_;
        }
        Self::from_counts(site, n, c, tp, fp, fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub site: String,
    pub frame_a: u32,
    pub frame_b: u32,
    pub missing_prediction: bool,
    pub scores: ScoreRow,
    pub outcome: EventMatchOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    /// Effective options of the run that produced this report.
    pub run_config: serde_json::Value,
    pub per_pair: Vec<PairRow>,
    pub per_site: Vec<ScoreRow>,
    pub overall: ScoreRow,
}

/// Micro-aggregates `pairs`. Rows are ordered by site name then frame
/// indices, so the report does not depend on input order.
pub fn aggregate(
    model: &str,
    run_config: serde_json::Value,
    pairs: &[PairEvaluation],
) -> Result<MetricsReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    let mut sorted: Vec<&PairEvaluation> = pairs.iter().collect();
    sorted.sort_by(|a, b| (&a.site, a.frame_a, a.frame_b).cmp(&(&b.site, b.frame_a, b.frame_b)));

    let per_pair = sorted
        .iter()
        .map(|p| PairRow {
            site: p.site.clone(),
            frame_a: p.frame_a,
            frame_b: p.frame_b,
            missing_prediction: p.missing_prediction,
            scores: ScoreRow::from_pairs(&p.site, [*p]),
            outcome: p.outcome.clone(),
        })
        .collect();

    let mut by_site: BTreeMap<&str, Vec<&PairEvaluation>> = BTreeMap::new();
    for p in &sorted {
        by_site.entry(p.site.as_str()).or_default().push(p);
    }
    let per_site = by_site.iter().map(|(site, ps)| ScoreRow::from_pairs(site, ps.iter().copied())).collect();
    let overall = ScoreRow::from_pairs(OVERALL, sorted.iter().copied());
    Ok(MetricsReport { model: model.to_owned(), run_config, per_pair, per_site, overall })
}

/// Ratio as a percentage with two decimals.
pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn write_rows(&self, out: &mut csv::Writer<Vec<u8>>) -> csv::Result<()> {
        for row in self.per_site.iter().chain(std::iter::once(&self.overall)) {
            out.write_record([
                self.model.clone(),
                row.site.clone(),
                percent(row.precision),
                percent(row.recall),
                percent(row.f1),
                percent(row.iou),
                row.event_tp.to_string(),
                row.event_fp.to_string(),
                row.event_fn.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        render_csv(std::slice::from_ref(self))
    }
}

/// Header plus one line per site and one overall line for each report.
pub fn render_csv(reports: &[MetricsReport]) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    let write = |out: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
        out.write_record(CSV_HEADER.split(','))?;
        for r in reports {
            r.write_rows(out)?;
        }
        out.flush()?;
        Ok(())
    };
    write(&mut out).expect("writing to memory cannot fail");
    String::from_utf8(out.into_inner().expect("flushed")).expect("all fields are UTF-8")
}

#[cfg(test)]
mod tests {
    use super::super::{GtMatch, Verdict};
    use super::*;

    fn outcome(tp: usize, misses: usize, unmatched: usize) -> EventMatchOutcome {
        let g = |verdict| GtMatch { gt_index: 0, gt_area: 4, merged_pred_area: 4, intersection: 4, iou: 1.0, verdict };
        let per_gt =
            std::iter::repeat_n(g(Verdict::Tp), tp).chain(std::iter::repeat_n(g(Verdict::FnFp), misses)).collect();
        EventMatchOutcome { per_gt, unmatched_pred_fps: unmatched, threshold: 0.25 }
    }

    fn pair(site: &str, a: u32, tp: u64, fp: u64, fn_: u64, ev: (usize, usize, usize)) -> PairEvaluation {
        PairEvaluation {
            site: site.into(),
            frame_a: a,
            frame_b: a + 1,
            confusion: Confusion { tp, fp, fn_, tn: 100 },
            outcome: outcome(ev.0, ev.1, ev.2),
            missing_prediction: false,
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(aggregate("m", serde_json::Value::Null, &[]), Err(MetricsError::EmptyAggregate));
    }

    #[test]
    fn single_pair_equals_its_own_scores() {
        let p = pair("s", 0, 6, 2, 4, (2, 1, 1));
        let r = aggregate("m", serde_json::Value::Null, std::slice::from_ref(&p)).unwrap();
        let px = pixel_scores(p.confusion);
        let ev = event_scores(&p.outcome);
        assert_eq!((r.overall.f1, r.overall.iou), (px.f1, px.iou));
        assert_eq!((r.overall.precision, r.overall.recall), (ev.precision, ev.recall));
        assert_eq!(r.per_pair[0].scores, ScoreRow { site: "s".into(), ..r.overall.clone() });
    }

    #[test]
    fn duplication_does_not_change_ratios() {
        let p = pair("s", 0, 6, 2, 4, (2, 1, 1));
        let one = aggregate("m", serde_json::Value::Null, std::slice::from_ref(&p)).unwrap().overall;
        let two = aggregate("m", serde_json::Value::Null, &[p.clone(), p]).unwrap().overall;
        assert_eq!((one.precision, one.recall, one.f1, one.iou), (two.precision, two.recall, two.f1, two.iou));
        assert_eq!(two.event_tp, 2 * one.event_tp);
    }

    #[test]
    fn micro_not_macro() {
        let a = pair("s", 0, 1, 1, 0, (0, 0, 0));
        let b = pair("s", 1, 3, 0, 0, (0, 0, 0));
        let r = aggregate("m", serde_json::Value::Null, &[a, b]).unwrap();
        assert_eq!(r.overall.pixel_precision, 4.0 / 5.0);
        assert_ne!(r.overall.pixel_precision, (0.5 + 1.0) / 2.0);
    }

    #[test]
    fn rows_are_ordered_and_split_by_site() {
        let ps = [
            pair("zeta", 3, 1, 0, 0, (1, 0, 0)),
            pair("alpha", 1, 0, 1, 0, (0, 0, 1)),
            pair("zeta", 0, 1, 0, 1, (0, 1, 0)),
        ];
        let r = aggregate("m", serde_json::Value::Null, &ps).unwrap();
        let keys: Vec<_> = r.per_pair.iter().map(|p| (p.site.as_str(), p.frame_a)).collect();
        assert_eq!(keys, vec![("alpha", 1), ("zeta", 0), ("zeta", 3)]);
        assert_eq!(r.per_site.iter().map(|s| s.site.as_str()).collect::<Vec<_>>(), vec!["alpha", "zeta"]);
        assert_eq!(r.per_site[1].pairs, 2);
        let mut rev = ps.to_vec();
        rev.reverse();
        assert_eq!(aggregate("m", serde_json::Value::Null, &rev).unwrap(), r);
    }

    #[test]
    fn csv_uses_two_decimal_percent() {
        let row = |site: &str| ScoreRow {
            site: site.into(),
            pairs: 1,
            precision: 0.5,
            recall: 1.0 / 3.0,
            f1: 0.0852,
            iou: 0.0488,
            event_tp: 1,
            event_fp: 1,
            event_fn: 2,
            pixel_precision: 0.0,
            pixel_recall: 0.0,
            confusion: Confusion::default(),
        };
        let r = MetricsReport {
            model: "ModelA".into(),
            run_config: serde_json::Value::Null,
            per_pair: vec![],
            per_site: vec![],
            overall: row(OVERALL),
        };
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\nModelA,overall,50.00,33.33,8.52,4.88,1,1,2\n"));
    }

    #[test]
    fn csv_quotes_awkward_names() {
        let r = aggregate("a,b", serde_json::Value::Null, &[pair("s", 0, 1, 0, 0, (1, 0, 0))]).unwrap();
        assert!(r.to_csv().lines().nth(1).unwrap().starts_with("\"a,b\",s,"));
    }

    #[test]
    fn json_round_trip() {
        let r = aggregate("m", serde_json::json!({"seed": 7}), &[pair("s", 0, 6, 2, 4, (2, 1, 1))]).unwrap();
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
        assert!(r.to_json().contains("\"fn\": 4"));
    }

    #[test]
    fn compute_uses_gt_union() {
        let polys = [PolygonAnnotation::rect(0.0, 0.0, 4.0, 4.0), PolygonAnnotation::rect(2.0, 2.0, 6.0, 6.0)];
        let pred = rasterize_polygons(&polys, 8, 8).unwrap();
        let e = PairEvaluation::compute("s", 0, 1, &pred, &polys, 0.25, false).unwrap();
        assert_eq!(e.confusion, Confusion { tp: 28, fp: 0, fn_: 0, tn: 36 });
    }
}
