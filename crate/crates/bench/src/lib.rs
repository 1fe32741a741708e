//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voldet_core::{BinaryMask, FloatRaster, PolygonAnnotation, RgbRaster};

/// Camera resolution used for full-frame benchmarks.
pub const FRAME_W: u32 = 4000;
pub const FRAME_H: u32 = 2400;

/// `n` wavy closed polygons of radius 40..180 px.
pub fn gt_polygons(w: u32, h: u32, n: usize, seed: u64) -> Vec<PolygonAnnotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.random_range(40.0..180.0);
            let cx = rng.random_range(r..f64::from(w) - r);
            let cy = rng.random_range(r..f64::from(h) - r);
            let vertices = (0..24)
                .map(|k| {
                    let a = std::f64::consts::TAU * f64::from(k) / 24.0;
                    let rr = r * (0.8 + 0.2 * (3.0 * a).sin());
                    [cx + rr * a.cos(), cy + rr * a.sin()]
                })
                .collect();
            PolygonAnnotation::new(vertices)
        })
        .collect()
}

/// Union of `n` random discs plus sparse single-pixel speckle.
pub fn blob_mask(w: u32, h: u32, n: usize, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discs: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            (rng.random_range(0.0..f64::from(w)), rng.random_range(0.0..f64::from(h)), rng.random_range(5.0..150.0))
        })
        .collect();
    BinaryMask::from_fn(w, h, |x, y| {
        let (fx, fy) = (f64::from(x), f64::from(y));
        discs.iter().any(|(cx, cy, r)| (fx - cx).powi(2) + (fy - cy).powi(2) < r * r) || (x * 7 + y * 13) % 9973 == 0
    })
    .expect("nonzero dimensions")
}

pub fn noise_raster(w: u32, h: u32, seed: u64) -> FloatRaster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FloatRaster::from_fn(w, h, |_, _| rng.random_range(0.0..1.0)).expect("nonzero dimensions")
}

/// Textured frame and a copy with a `side`-pixel square of fresh texture pasted at its centre.
pub fn image_pair(w: u32, h: u32, side: u32, seed: u64) -> (RgbRaster, RgbRaster) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = RgbRaster::from_fn(w, h, |_, _| {
        let v = rng.random_range(40..200u8);
        [v, v, v]
    })
    .expect("nonzero dimensions");
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let b = RgbRaster::from_fn(w, h, |x, y| {
        if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
            let v = rng.random_range(40..200u8);
            [v, v, v]
        } else {
            a.get(x, y)
        }
    })
    .expect("nonzero dimensions");
    (a, b)
}
