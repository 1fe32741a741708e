use super::{FloatRaster, RasterError};

/// Source coordinate and blend weight for each output index under
/// corner-aligned sampling: output `0` and `out - 1` land exactly on input
/// `0` and `input - 1`.
fn axis_taps(input: u32, out: u32) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|o| {
            if input == 1 || out == 1 {
                return (0, 0, 0.0);
            }
            let s = o as f64 * (input - 1) as f64 / (out - 1) as f64;
            let i0 = (s.floor() as usize).min(input as usize - 1);
            let i1 = (i0 + 1).min(input as usize - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

/// Bilinear resampling to `out_w x out_h` with corner-aligned sampling.
///
/// Resampling to the input size is the identity, bit for bit.
pub fn upsample_bilinear(raster: &FloatRaster, out_w: u32, out_h: u32) -> Result<FloatRaster, RasterError> {
    let len = super::checked_len(out_w, out_h)?;
    if raster.dims() == (out_w, out_h) {
        return Ok(raster.clone());
    }
    let xs = axis_taps(raster.width(), out_w);
    let ys = axis_taps(raster.height(), out_h);
    let src = raster.values();
    let w = raster.width() as usize;
    let mut values = Vec::with_capacity(len);
    for &(y0, y1, ty) in &ys {
        let (r0, r1) = (&src[y0 * w..(y0 + 1) * w], &src[y1 * w..(y1 + 1) * w]);
        for &(x0, x1, tx) in &xs {
            let top = lerp(f64::from(r0[x0]), f64::from(r0[x1]), tx);
            let bottom = lerp(f64::from(r1[x0]), f64::from(r1[x1]), tx);
            values.push(lerp(top, bottom, ty) as f32);
        }
    }
    FloatRaster::new(out_w, out_h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let r = FloatRaster::filled(7, 3, 0.7).unwrap();
        let up = upsample_bilinear(&r, 19, 11).unwrap();
        assert!(up.values().iter().all(|v| *v == 0.7));
    }

    #[test]
    fn single_pixel_broadcasts() {
        let r = FloatRaster::filled(1, 1, 0.25).unwrap();
        let up = upsample_bilinear(&r, 5, 5).unwrap();
        assert!(up.values().iter().all(|v| *v == 0.25));
    }

    #[test]
    fn checkerboard_center_matches_closed_form() {
        let r = FloatRaster::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let up = upsample_bilinear(&r, 3, 3).unwrap();
        // f(u, v) = (1-u)(1-v)*0 + u(1-v)*1 + (1-u)v*1 + uv*0 at u = x/2, v = y/2.
        let closed = |u: f64, v: f64| u * (1.0 - v) + (1.0 - u) * v;
        for y in 0..3 {
            for x in 0..3 {
                let expected = closed(x as f64 / 2.0, y as f64 / 2.0) as f32;
                assert_eq!(up.get(x, y), expected, "({x},{y})");
            }
        }
        assert_eq!(up.get(1, 1), 0.5);
    }

    #[test]
    fn corners_are_preserved() {
        let r = FloatRaster::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = upsample_bilinear(&r, 9, 6).unwrap();
        assert_eq!((up.get(0, 0), up.get(8, 0), up.get(0, 5), up.get(8, 5)), (1.0, 2.0, 3.0, 4.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn raster() -> impl Strategy<Value = FloatRaster> {
            (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
                proptest::collection::vec(-100.0f32..100.0, (w * h) as usize)
                    .prop_map(move |v| FloatRaster::new(w, h, v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn same_size_is_identity(r in raster()) {
                prop_assert_eq!(upsample_bilinear(&r, r.width(), r.height()).unwrap(), r);
            }

            #[test]
            fn output_stays_within_input_range(r in raster(), ow in 1u32..40, oh in 1u32..40) {
                let (lo, hi) = r.min_max();
                let up = upsample_bilinear(&r, ow, oh).unwrap();
                prop_assert!(up.values().iter().all(|v| *v >= lo && *v <= hi));
            }
        }
    }
}
