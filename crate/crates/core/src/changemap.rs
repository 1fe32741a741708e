//! Turning model score fields into binary change maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{connected_components, ensure_same_dims, upsample_bilinear, BinaryMask, FloatRaster, RasterError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Set iff `value > t`.
    Fixed(f64),
    /// Set iff `value > mean + k * sigma`, population statistics over the raster.
    MeanPlusKSigma(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::MeanPlusKSigma(2.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("expected fixed:<t> or sigma:<k>, got {0:?}")]
    Syntax(String),
    #[error("threshold must be finite, got {0}")]
    NonFinite(f64),
    #[error("k must be finite and non-negative, got {0}")]
    NegativeK(f64),
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<(), RuleError> {
        match *self {
            ThresholdRule::Fixed(t) if !t.is_finite() => Err(RuleError::NonFinite(t)),
            ThresholdRule::MeanPlusKSigma(k) if !k.is_finite() || k < 0.0 => Err(RuleError::NegativeK(k)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Fixed(t) => write!(f, "fixed:{t}"),
            ThresholdRule::MeanPlusKSigma(k) => write!(f, "sigma:{k}"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s.split_once(':').ok_or_else(|| RuleError::Syntax(s.into()))?;
        let v: f64 = value.trim().parse().map_err(|_| RuleError::Syntax(s.into()))?;
        let rule = match kind.trim() {
            "fixed" => ThresholdRule::Fixed(v),
            "sigma" => ThresholdRule::MeanPlusKSigma(v),
            _ => return Err(RuleError::Syntax(s.into())),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// `1 - c` per pixel. Values outside `[0, 1]` are clamped first.
pub fn complement_confidence(conf: &FloatRaster) -> FloatRaster {
    let outside = conf.values().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if outside > 0 {
        log::warn!("{outside} confidence values outside [0, 1] were clamped");
    }
    conf.map(|v| 1.0 - v.clamp(0.0, 1.0)).expect("complement of a finite raster is finite")
}

pub fn abs_difference(a: &FloatRaster, b: &FloatRaster) -> Result<FloatRaster, RasterError> {
    ensure_same_dims(a.dims(), b.dims())?;
    let values = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
    FloatRaster::new(a.width(), a.height(), values)
}

pub fn threshold(score: &FloatRaster, rule: ThresholdRule) -> BinaryMask {
    let bits = match rule {
        ThresholdRule::Fixed(t) => score.values().iter().map(|v| f64::from(*v) > t).collect(),
        ThresholdRule::MeanPlusKSigma(k) => {
            let (mean, std) = score.mean_std();
            let margin = k * std;
            score.values().iter().map(|v| f64::from(*v) - mean > margin).collect()
        }
    };
    BinaryMask::from_bits(score.width(), score.height(), bits).expect("dimensions come from a valid raster")
}

/// Drops every 8-connected component smaller than `min_area` pixels.
pub fn min_area_filter(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    if min_area == 0 {
        return mask.clone();
    }
    let mut out = mask.clone();
    let w = mask.width() as usize;
    for c in connected_components(mask) {
        if c.pixel_count < min_area {
            for &p in &c.pixels {
                let p = p as usize;
                out.set((p % w) as u32, (p / w) as u32, false);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreSource {
    /// Matcher confidence; change score is its complement.
    Confidence(FloatRaster),
    /// Two depth maps; change score is their absolute difference.
    DepthPair(FloatRaster, FloatRaster),
    /// Pre-softmax change activation, used as is.
    Activation(FloatRaster),
}

impl ScoreSource {
    pub fn score(&self) -> Result<FloatRaster, RasterError> {
        match self {
            ScoreSource::Confidence(c) => Ok(complement_confidence(c)),
            ScoreSource::DepthPair(a, b) => abs_difference(a, b),
            ScoreSource::Activation(a) => Ok(a.clone()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChangeMapError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// score, upsample to `target_w x target_h`, threshold, then min-area filter.
pub fn derive_change_map(
    source: &ScoreSource,
    rule: ThresholdRule,
    min_area: usize,
    target_w: u32,
    target_h: u32,
) -> Result<BinaryMask, ChangeMapError> {
    rule.validate()?;
    let score = upsample_bilinear(&source.score()?, target_w, target_h)?;
    Ok(min_area_filter(&threshold(&score, rule), min_area))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn raster(w: u32, h: u32, v: &[f32]) -> FloatRaster {
        FloatRaster::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn complement_examples() {
        assert!(complement_confidence(&FloatRaster::filled(3, 3, 1.0).unwrap()).values().iter().all(|v| *v == 0.0));
        assert!(complement_confidence(&FloatRaster::filled(3, 3, 0.0).unwrap()).values().iter().all(|v| *v == 1.0));
        let c = complement_confidence(&raster(2, 1, &[0.2, 0.9]));
        assert_eq!(c.values(), &[1.0 - 0.2f32, 1.0 - 0.9f32]);
    }

    #[test]
    fn complement_clamps_out_of_range() {
        let c = complement_confidence(&raster(2, 1, &[-0.5, 1.5]));
        assert_eq!(c.values(), &[1.0, 0.0]);
    }

    #[test]
    fn abs_difference_examples() {
        assert_eq!(abs_difference(&raster(1, 1, &[3.0]), &raster(1, 1, &[5.0])).unwrap().values(), &[2.0]);
        let a = raster(2, 2, &[1.0, -2.0, 3.5, 0.0]);
        assert!(abs_difference(&a, &a).unwrap().values().iter().all(|v| *v == 0.0));
        assert!(matches!(abs_difference(&a, &raster(1, 1, &[0.0])), Err(RasterError::DimensionMismatch { .. })));
    }

    #[test]
    fn sigma_rule_on_constant_is_empty() {
        let m = threshold(&FloatRaster::filled(5, 5, 3.3).unwrap(), ThresholdRule::MeanPlusKSigma(2.0));
        assert!(m.is_empty());
    }

    #[test]
    fn sigma_rule_boundary_is_strict() {
        let r = raster(5, 1, &[0.0, 0.0, 0.0, 0.0, 10.0]);
        let vals: Vec<f64> = r.values().iter().map(|v| f64::from(*v)).collect();
        let mean = vals.iter().sum::<f64>() / 5.0;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0).sqrt();
        assert_eq!((mean, std), (2.0, 4.0));
        assert_eq!(mean + 2.0 * std, 10.0);
        assert!(threshold(&r, ThresholdRule::MeanPlusKSigma(2.0)).is_empty());
        assert_eq!(threshold(&r, ThresholdRule::MeanPlusKSigma(1.9)).count_ones(), 1);
    }

    #[test]
    fn fixed_rule_is_strict() {
        let m = threshold(&raster(2, 1, &[0.0, 1.0]), ThresholdRule::Fixed(0.5));
        assert_eq!(m.bits(), &[false, true]);
        assert!(threshold(&raster(1, 1, &[0.5]), ThresholdRule::Fixed(0.5)).is_empty());
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("fixed:0.5".parse(), Ok(ThresholdRule::Fixed(0.5)));
        assert_eq!("sigma:2".parse(), Ok(ThresholdRule::MeanPlusKSigma(2.0)));
        assert_eq!("sigma:-1".parse::<ThresholdRule>(), Err(RuleError::NegativeK(-1.0)));
        assert_eq!("fixed:inf".parse::<ThresholdRule>(), Err(RuleError::NonFinite(f64::INFINITY)));
        assert!(matches!("median:2".parse::<ThresholdRule>(), Err(RuleError::Syntax(_))));
        assert_eq!(ThresholdRule::default().to_string(), "sigma:2");
    }

    #[test]
    fn min_area_examples() {
        let m = BinaryMask::from_fn(6, 6, |x, y| y == 2 && x < 3).unwrap();
        assert_eq!(min_area_filter(&m, 0), m);
        assert_eq!(min_area_filter(&m, 3), m);
        assert!(min_area_filter(&m, 4).is_empty());
    }

    #[test]
    fn trivial_pipelines_are_empty() {
        let conf = ScoreSource::Confidence(FloatRaster::filled(8, 8, 1.0).unwrap());
        assert!(derive_change_map(&conf, ThresholdRule::MeanPlusKSigma(2.0), 0, 32, 32).unwrap().is_empty());
        let d = FloatRaster::from_fn(8, 8, |x, y| (x * y) as f32).unwrap();
        let depth = ScoreSource::DepthPair(d.clone(), d);
        assert!(derive_change_map(&depth, ThresholdRule::MeanPlusKSigma(2.0), 0, 16, 16).unwrap().is_empty());
    }

    #[test]
    fn depth_pair_dimension_mismatch_propagates() {
        let src =
            ScoreSource::DepthPair(FloatRaster::filled(2, 2, 0.0).unwrap(), FloatRaster::filled(3, 2, 0.0).unwrap());
        assert!(matches!(
            derive_change_map(&src, ThresholdRule::Fixed(0.1), 0, 4, 4),
            Err(ChangeMapError::Raster(RasterError::DimensionMismatch { .. }))
        ));
    }

    /// Hand-composed stages: complement, corner-aligned bilinear, strict
    /// threshold, each written out independently of the library code.
    #[test]
    fn coarse_block_composition() {
        let conf =
            FloatRaster::from_fn(64, 64, |x, y| if (20..28).contains(&x) && (30..38).contains(&y) { 0.0 } else { 1.0 })
                .unwrap();
        let got =
            derive_change_map(&ScoreSource::Confidence(conf.clone()), ThresholdRule::Fixed(0.5), 0, 512, 512).unwrap();

        let score = |x: usize, y: usize| 1.0 - f64::from(conf.get(x as u32, y as u32));
        let tap = |o: usize| {
            let s = o as f64 * 63.0 / 511.0;
            let i0 = (s.floor() as usize).min(63);
            (i0, (i0 + 1).min(63), s - i0 as f64)
        };
        let mut expected = BinaryMask::new(512, 512).unwrap();
        for oy in 0..512 {
            let (y0, y1, ty) = tap(oy);
            for ox in 0..512 {
                let (x0, x1, tx) = tap(ox);
                let top = (1.0 - tx) * score(x0, y0) + tx * score(x1, y0);
                let bot = (1.0 - tx) * score(x0, y1) + tx * score(x1, y1);
                let v = ((1.0 - ty) * top + ty * bot) as f32;
                expected.set(ox as u32, oy as u32, f64::from(v) > 0.5);
            }
        }
        assert_eq!(got, expected);
        let comps = connected_components(&got);
        assert_eq!(comps.len(), 1);
        // The 8x8 block scales by 511/63 to roughly 65x65.
        let (bx0, by0, bx1, by1) = comps[0].bounding_box;
        let (bw, bh) = (bx1 - bx0 + 1, by1 - by0 + 1);
        assert!((60..=70).contains(&bw) && (60..=70).contains(&bh), "{bw}x{bh}");
    }

    fn flood_fill_sizes(mask: &BinaryMask) -> Vec<(Vec<(u32, u32)>, usize)> {
        let (w, h) = mask.dims();
        let mut seen = vec![false; (w * h) as usize];
        let mut out = Vec::new();
        for sy in 0..h {
            for sx in 0..w {
                if !mask.get(sx, sy) || seen[(sy * w + sx) as usize] {
                    continue;
                }
                let mut pixels = Vec::new();
                let mut q = VecDeque::from([(sx, sy)]);
                seen[(sy * w + sx) as usize] = true;
                while let Some((x, y)) = q.pop_front() {
                    pixels.push((x, y));
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            let (nx, ny) = (nx as u32, ny as u32);
                            if mask.get(nx, ny) && !seen[(ny * w + nx) as usize] {
                                seen[(ny * w + nx) as usize] = true;
                                q.push_back((nx, ny));
                            }
                        }
                    }
                }
                let n = pixels.len();
                out.push((pixels, n));
            }
        }
        out
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mask(w: u32, h: u32) -> impl Strategy<Value = BinaryMask> {
            proptest::collection::vec(prop::bool::weighted(0.35), (w * h) as usize)
                .prop_map(move |b| BinaryMask::from_bits(w, h, b).unwrap())
        }

        fn raster() -> impl Strategy<Value = FloatRaster> {
            (1u32..16, 1u32..16).prop_flat_map(|(w, h)| {
                proptest::collection::vec(-50.0f32..50.0, (w * h) as usize)
                    .prop_map(move |v| FloatRaster::new(w, h, v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn min_area_matches_flood_fill(m in mask(24, 24), min_area in 0usize..12) {
                let got = min_area_filter(&m, min_area);
                let mut expected = BinaryMask::new(24, 24).unwrap();
                for (pixels, n) in flood_fill_sizes(&m) {
                    if n >= min_area {
                        for (x, y) in pixels {
                            expected.set(x, y, true);
                        }
                    }
                }
                prop_assert_eq!(&got, &expected);
                prop_assert_eq!(min_area_filter(&got, min_area), got);
            }

            #[test]
            fn fixed_threshold_is_monotone(r in raster(), t1 in -60.0f64..60.0, dt in 0.0f64..30.0) {
                let lo = threshold(&r, ThresholdRule::Fixed(t1));
                let hi = threshold(&r, ThresholdRule::Fixed(t1 + dt));
                prop_assert!(hi.bits().iter().zip(lo.bits()).all(|(h, l)| !*h || *l));
            }

            #[test]
            fn abs_difference_is_symmetric(a in raster(), seed in any::<u32>()) {
                let b = a.map(|v| v * 0.5 + (seed % 97) as f32 - 40.0).unwrap();
                prop_assert_eq!(abs_difference(&a, &b).unwrap(), abs_difference(&b, &a).unwrap());
            }

            // Values on the k/2^24 grid so 1 - (1 - v) is exact in f32.
            #[test]
            fn complement_is_involution(ks in proptest::collection::vec(0u32..=(1 << 24), 1..64)) {
                let n = ks.len() as u32;
                let r = FloatRaster::new(n, 1, ks.iter().map(|k| *k as f32 / (1u32 << 24) as f32).collect()).unwrap();
                prop_assert_eq!(complement_confidence(&complement_confidence(&r)), r);
            }

            // Power-of-two sized integer rasters keep the mean exact, so the
            // shift cancels without rounding.
            #[test]
            fn sigma_rule_is_shift_invariant(vals in proptest::collection::vec(-1000i32..1000, 64), c in -5000i32..5000, k in 0.0f64..4.0) {
                let r = FloatRaster::new(8, 8, vals.iter().map(|v| *v as f32).collect()).unwrap();
                let shifted = r.map(|v| v + c as f32).unwrap();
                let rule = ThresholdRule::MeanPlusKSigma(k);
                prop_assert_eq!(threshold(&r, rule), threshold(&shifted, rule));
            }

            #[test]
            fn pipeline_equals_manual_composition(r in raster(), tw in 1u32..40, th in 1u32..40, min_area in 0usize..5, k in 0.0f64..3.0) {
                let conf = r.map(|v| (v + 50.0) / 100.0).unwrap();
                let rule = ThresholdRule::MeanPlusKSigma(k);
                let got = derive_change_map(&ScoreSource::Confidence(conf.clone()), rule, min_area, tw, th).unwrap();
                let manual = min_area_filter(&threshold(&upsample_bilinear(&complement_confidence(&conf), tw, th).unwrap(), rule), min_area);
                prop_assert_eq!(got, manual);
            }
        }
    }
}
