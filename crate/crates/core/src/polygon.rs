//! Simple polygons in pixel coordinates and the scanline geometry shared by
//! rasterization and evaluation.

use serde::{Deserialize, Serialize};

/// A ground-truth change region: an implicitly closed ring of `(x, y)` pixel
/// coordinates. Serialized as `[[x, y], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolygonAnnotation {
    pub vertices: Vec<[f64; 2]>,
}

/// A horizontal run of covered pixels `x0..x1` on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub y: u32,
    pub x0: u32,
    pub x1: u32,
}

impl PolygonAnnotation {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area (positive for counter-clockwise rings in y-up axes).
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a[0] * b[1] - b[0] * a[1]).sum::<f64>() / 2.0
    }

    /// `(min_x, min_y, max_x, max_y)`, or `None` for an empty ring.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.vertices.first()?;
        Some(self.vertices.iter().fold((first[0], first[1], first[0], first[1]), |(x0, y0, x1, y1), v| {
            (x0.min(v[0]), y0.min(v[1]), x1.max(v[0]), y1.max(v[1]))
        }))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.vertices.iter().map(|v| [v[0] + dx, v[1] + dy]).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.vertices.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }

    /// True when no two non-adjacent edges touch and no edge is degenerate.
    /// Quadratic in the vertex count, which is fine for annotation polygons.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || !self.all_finite() {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        if edges.iter().any(|(a, b)| a == b) {
            return false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // Adjacent edges share one vertex; they may only overlap if collinear and folding back.
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (c, b) };
                    if orientation(p, shared, q) == 0.0 && dot(sub(p, shared), sub(q, shared)) > 0.0 {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Even-odd coverage spans of pixel centers, clipped to `width x height`.
    ///
    /// Pixel `(x, y)` is covered iff the number of edge crossings strictly to
    /// the right of its center `(x + 0.5, y + 0.5)` is odd. Edges are treated
    /// as half-open in y so shared vertices are counted once.
    pub fn spans(&self, width: u32, height: u32) -> Vec<Span> {
        let mut out = Vec::new();
        let Some((_, min_y, _, max_y)) = self.bounds() else {
            return out;
        };
        if self.vertices.len() < 3 || !self.all_finite() || width == 0 || height == 0 {
            return out;
        }
        let row_lo = (min_y - 0.5).ceil().max(0.0);
        let row_hi = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if row_lo > row_hi {
            return out;
        }
        let mut xs: Vec<f64> = Vec::with_capacity(self.vertices.len());
        for y in row_lo as u32..=row_hi as u32 {
            let yc = y as f64 + 0.5;
            xs.clear();
            for (a, b) in self.edges() {
                if (a[1] > yc) != (b[1] > yc) {
                    xs.push(edge_crossing_x(a, b, yc));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                // Covered centers satisfy pair[0] <= x + 0.5 < pair[1].
                let lo = (pair[0] - 0.5).ceil().max(0.0);
                let hi = (pair[1] - 0.5).ceil().min(width as f64);
                if lo < hi {
                    out.push(Span { y, x0: lo as u32, x1: hi as u32 });
                }
            }
        }
        out
    }

    /// Number of pixels [`spans`](Self::spans) covers without clipping to a
    /// raster, i.e. the polygon's own rasterized area.
    pub fn raster_area(&self) -> u64 {
        let Some((min_x, min_y, max_x, max_y)) = self.bounds() else {
            return 0;
        };
        if !self.all_finite() {
            return 0;
        }
        let (ox, oy) = ((min_x.floor() - 1.0), (min_y.floor() - 1.0));
        let shifted = self.translated(-ox, -oy);
        let w = (max_x - ox).ceil() as u32 + 2;
        let h = (max_y - oy).ceil() as u32 + 2;
        shifted.spans(w, h).iter().map(|s| u64::from(s.x1 - s.x0)).sum()
    }
}

/// x coordinate where edge `a - b` crosses the horizontal line `y = yc`.
/// Evaluated from the lower endpoint so both edge directions round alike.
#[inline]
pub(crate) fn edge_crossing_x(a: [f64; 2], b: [f64; 2], yc: f64) -> f64 {
    let (a, b) = if a[1] <= b[1] { (a, b) } else { (b, a) };
    a[0] + (yc - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn orientation(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
        || (o1 * o2 < 0.0 && o3 * o4 < 0.0)
}
