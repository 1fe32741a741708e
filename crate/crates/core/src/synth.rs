//! Synthetic time-lapse sequences with exact volumetric-change ground truth.
//!
//! The scene is a tilted plane of depth, viewed orthographically, painted
//! with a value-noise albedo. Each event drops the depth of a random convex
//! region by a fixed amount at its onset frame and keeps it there; the
//! region is also re-textured with brighter "fresh" material copied from
//! elsewhere in the scene. Frames are rendered with Lambertian shading,
//! a per-frame lighting gain, and Gaussian pixel noise.
//!
//! Plane coefficients are multiples of 1/256 so depth differences across
//! the undisturbed surface are exact in f32; with zero noise and no
//! lighting drift, the only pixels that change between two frames are the
//! pixels of events that occurred between them.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{AnnotatedPair, Frame, Manifest, Site, Split, SCHEMA_VERSION};
use crate::polygon::PolygonAnnotation;
use crate::raster::{rasterize_polygon, BinaryMask, FloatRaster, RgbRaster};

/// Depth steps larger than this between neighbours are treated as walls and
/// excluded from surface normals.
pub const WALL_STEP: f64 = 1.0 / 32.0;
pub const SITE_NAME: &str = "synthetic";
/// 2024-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_704_067_200;

const BASE_DEPTH: f64 = 4096.0;
const MAX_SIDE: u32 = 4096;
const PLACEMENT_ATTEMPTS: usize = 500;
const EVENT_MARGIN: f64 = 8.0;
const LATTICE: u32 = 8;
const BASE_ALBEDO: (f64, f64) = (38.0, 102.0);
const FRESH_ALBEDO: (f64, f64) = (166.0, 76.0);
const LIGHT: [f64; 3] = [-0.3, -0.4, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub n_frames: u32,
    /// Seconds between consecutive frames.
    pub frame_interval: i64,
    pub start_time: i64,
    pub epsilon: f64,
    pub tau: u32,
    pub n_events: u32,
    /// Inclusive pixel-area bounds for event regions.
    pub event_area_range: (u64, u64),
    pub depth_drop_range: (f64, f64),
    /// Per-frame gain is drawn from `1 +- lighting_drift`.
    pub lighting_drift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 96,
            n_frames: 20,
            frame_interval: 3600,
            start_time: DEFAULT_START,
            epsilon: 1.0,
            tau: 3,
            n_events: 2,
            event_area_range: (100, 400),
            depth_drop_range: (10.0, 20.0),
            lighting_drift: 0.05,
            noise_sigma: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("could not place event {event} after {attempts} attempts; the scene is too crowded")]
    Placement { event: u32, attempts: usize },
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.width == 0 || self.height == 0 || self.width > MAX_SIDE || self.height > MAX_SIDE {
            return bad(format!("width and height must lie in [1, {MAX_SIDE}]"));
        }
        if self.n_frames < 3 {
            return bad(format!("n_frames must be at least 3, got {}", self.n_frames));
        }
        // An event needs two later frames j < k with k - i < tau.
        if self.tau < 3 {
            return bad(format!("tau must be at least 3, got {}", self.tau));
        }
        if self.frame_interval <= 0 {
            return bad("frame_interval must be positive".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        let (lo, hi) = self.depth_drop_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && hi <= 1000.0) {
            return bad(format!("depth_drop_range must be ordered and at most 1000, got ({lo}, {hi})"));
        }
        if lo <= self.epsilon || lo <= 2.0 * WALL_STEP {
            return bad(format!(
                "minimum depth drop {lo} must exceed epsilon {} and {}",
                self.epsilon,
                2.0 * WALL_STEP
            ));
        }
        let (alo, ahi) = self.event_area_range;
        if alo == 0 || alo > ahi {
            return bad(format!("event_area_range must be ordered and positive, got ({alo}, {ahi})"));
        }
        if !(0.0..1.0).contains(&self.lighting_drift) {
            return bad(format!("lighting_drift must lie in [0, 1), got {}", self.lighting_drift));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthStack {
    pub frames: Vec<FloatRaster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub region: PolygonAnnotation,
    /// The change happens between frames `onset - 1` and `onset`.
    pub onset: u32,
    pub depth_drop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub images: Vec<RgbRaster>,
    pub depth: DepthStack,
    pub events: Vec<SynthEvent>,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lighting {
    pub amplitude: f64,
    pub direction: [f64; 3],
}

impl Lighting {
    pub fn new(amplitude: f64) -> Self {
        Self { amplitude, direction: LIGHT }
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// One-sided slope along an axis: forward difference, else backward, else 0.
fn slope(fwd: Option<f64>, bwd: Option<f64>) -> f64 {
    let ok = |d: Option<f64>| d.filter(|d| d.abs() <= WALL_STEP);
    ok(fwd).or(ok(bwd)).unwrap_or(0.0)
}

/// Lambertian intensities before noise and clamping, 3 per pixel.
pub fn shade(depth: &FloatRaster, albedo: &RgbRaster, lighting: Lighting) -> Vec<f64> {
    assert_eq!(depth.dims(), albedo.dims(), "depth and albedo must share dimensions");
    let (w, h) = depth.dims();
    let l = normalize(lighting.direction);
    let z = |x: u32, y: u32| f64::from(depth.get(x, y));
    let mut out = Vec::with_capacity(3 * (w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let c = z(x, y);
            let gx = slope((x + 1 < w).then(|| z(x + 1, y) - c), (x > 0).then(|| c - z(x - 1, y)));
            let gy = slope((y + 1 < h).then(|| z(x, y + 1) - c), (y > 0).then(|| c - z(x, y - 1)));
            let n = normalize([-gx, -gy, 1.0]);
            let ndotl = (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
            for a in albedo.get(x, y) {
                out.push(lighting.amplitude * f64::from(a) * ndotl);
            }
        }
    }
    out
}

/// Shaded frame with Gaussian noise, rounded and clamped to 8 bits.
pub fn render(
    depth: &FloatRaster,
    albedo: &RgbRaster,
    lighting: Lighting,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> RgbRaster {
    let shaded = shade(depth, albedo, lighting);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("sigma is finite and non-negative");
    let data = shaded
        .iter()
        .map(|v| {
            let n = if noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            (v + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RgbRaster::new(depth.width(), depth.height(), data).expect("dimensions come from the depth raster")
}

fn albedo_bytes(v: f64, (base, span): (f64, f64)) -> [u8; 3] {
    let b = (base + (v * span).round()) as u8;
    [b, b.saturating_sub(4), b.saturating_sub(10)]
}

/// Coarse bilinear value noise blended with per-pixel jitter, in [0, 1].
fn value_noise(w: u32, h: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (gw, gh) = (w / LATTICE + 2, h / LATTICE + 2);
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    let g = |i: u32, j: u32| grid[(j * gw + i) as usize];
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let (i, j) = (x / LATTICE, y / LATTICE);
            let tx = f64::from(x % LATTICE) / f64::from(LATTICE);
            let ty = f64::from(y % LATTICE) / f64::from(LATTICE);
            let top = (1.0 - tx) * g(i, j) + tx * g(i + 1, j);
            let bottom = (1.0 - tx) * g(i, j + 1) + tx * g(i + 1, j + 1);
            let coarse = (1.0 - ty) * top + ty * bottom;
            out.push(0.6 * coarse + 0.4 * rng.random::<f64>());
        }
    }
    out
}

struct Placed {
    event: SynthEvent,
    mask: BinaryMask,
    bounds: (f64, f64, f64, f64),
    /// Offset of the albedo source region.
    source: (i64, i64),
}

fn quarter(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

fn try_place(
    cfg: &SynthConfig,
    placed: &[Placed],
    rng: &mut ChaCha8Rng,
) -> Option<(PolygonAnnotation, (f64, f64, f64, f64))> {
    let (w, h) = (f64::from(cfg.width), f64::from(cfg.height));
    let (alo, ahi) = cfg.event_area_range;
    let target = rng.random_range(alo..=ahi) as f64;
    let aspect = rng.random_range(0.6..1.6);
    let ry = (target / (PI * aspect * 0.85)).sqrt();
    let rx = ry * aspect;
    let rot = rng.random_range(0.0..PI);
    let n = rng.random_range(6..=10usize);
    let phase = rng.random_range(0.0..TAU);
    let r = rx.max(ry) + 1.0;
    if 2.0 * r >= w - 2.0 || 2.0 * r >= h - 2.0 {
        return None;
    }
    let cx = rng.random_range(r + 1.0..w - r - 1.0);
    let cy = rng.random_range(r + 1.0..h - r - 1.0);
    let (s, c) = rot.sin_cos();
    let vertices = (0..n)
        .map(|i| {
            let a = phase + (i as f64 + 0.6 * rng.random_range(-0.5..0.5)) / n as f64 * TAU;
            let (ex, ey) = (rx * a.cos(), ry * a.sin());
            [quarter(cx + c * ex - s * ey), quarter(cy + s * ex + c * ey)]
        })
        .collect();
    let poly = PolygonAnnotation::new(vertices);
    let bounds = poly.bounds()?;
    if bounds.0 < 1.0 || bounds.1 < 1.0 || bounds.2 > w - 1.0 || bounds.3 > h - 1.0 {
        return None;
    }
    if !poly.is_simple() || !(alo..=ahi).contains(&poly.raster_area()) {
        return None;
    }
    let clear = placed.iter().all(|p| {
        let b = p.bounds;
        bounds.2 + EVENT_MARGIN < b.0
            || b.2 + EVENT_MARGIN < bounds.0
            || bounds.3 + EVENT_MARGIN < b.1
            || b.3 + EVENT_MARGIN < bounds.1
    });
    clear.then_some((poly, bounds))
}

fn place_events(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Placed>, SynthError> {
    let mut placed: Vec<Placed> = Vec::with_capacity(cfg.n_events as usize);
    for event in 0..cfg.n_events {
        let (region, bounds) = (0..PLACEMENT_ATTEMPTS)
            .find_map(|_| try_place(cfg, &placed, rng))
            .ok_or(SynthError::Placement { event, attempts: PLACEMENT_ATTEMPTS })?;
        let mask = rasterize_polygon(&region, cfg.width, cfg.height).expect("config dimensions are valid");
        let onset = rng.random_range(1..=cfg.n_frames - 2);
        let (lo, hi) = cfg.depth_drop_range;
        let depth_drop = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let (bx0, by0) = (bounds.0.floor() as i64, bounds.1.floor() as i64);
        let (bx1, by1) = (bounds.2.ceil() as i64, bounds.3.ceil() as i64);
        let source = (
            rng.random_range(-bx0..=(i64::from(cfg.width) - bx1)),
            rng.random_range(-by0..=(i64::from(cfg.height) - by1)),
        );
        placed.push(Placed { event: SynthEvent { region, onset, depth_drop }, mask, bounds, source });
    }
    Ok(placed)
}

/// Builds the full sequence for `config`. Equal configs give bit-identical
/// output. Scene layout and lighting come from one ChaCha8 stream seeded
/// with `config.seed`; pixel noise comes from a second stream of the same
/// seed, so changing `noise_sigma` leaves the scene itself untouched.
pub fn generate(config: &SynthConfig) -> Result<SynthSequence, SynthError> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);

    let kx = f64::from(rng.random_range(-4..=4i32)) / 256.0;
    let ky = f64::from(rng.random_range(-4..=4i32)) / 256.0;
    let base_depth: Vec<f64> =
        (0..h).flat_map(|y| (0..w).map(move |x| BASE_DEPTH + kx * f64::from(x) + ky * f64::from(y))).collect();
    let texture = value_noise(w, h, &mut rng);
    let placed = place_events(config, &mut rng)?;
    let gains: Vec<f64> =
        (0..config.n_frames).map(|_| 1.0 + config.lighting_drift * rng.random_range(-1.0..=1.0)).collect();

    let mut depth = base_depth.clone();
    let mut albedo: Vec<[u8; 3]> = texture.iter().map(|v| albedo_bytes(*v, BASE_ALBEDO)).collect();
    let mut images = Vec::with_capacity(config.n_frames as usize);
    let mut depth_frames = Vec::with_capacity(config.n_frames as usize);
    for f in 0..config.n_frames {
        for p in placed.iter().filter(|p| p.event.onset == f) {
            for (i, set) in p.mask.bits().iter().enumerate() {
                if !set {
                    continue;
                }
                depth[i] = base_depth[i] - p.event.depth_drop;
                let (x, y) = ((i as u32 % w) as i64, (i as u32 / w) as i64);
                let (sx, sy) =
                    ((x + p.source.0).clamp(0, i64::from(w) - 1), (y + p.source.1).clamp(0, i64::from(h) - 1));
                albedo[i] = albedo_bytes(texture[(sy * i64::from(w) + sx) as usize], FRESH_ALBEDO);
            }
        }
        let z = FloatRaster::new(w, h, depth.iter().map(|v| *v as f32).collect()).expect("depth is finite");
        let a = RgbRaster::new(w, h, albedo.iter().flatten().copied().collect()).expect("albedo matches dimensions");
        images.push(render(&z, &a, Lighting::new(gains[f as usize]), config.noise_sigma, &mut noise_rng));
        depth_frames.push(z);
    }

    let events: Vec<SynthEvent> = placed.into_iter().map(|p| p.event).collect();
    let manifest = build_manifest(config, &events);
    Ok(SynthSequence { images, depth: DepthStack { frames: depth_frames }, events, manifest })
}

pub fn image_path(frame: u32) -> String {
    format!("images/frame_{frame:04}.png")
}

pub fn depth_path(frame: u32) -> String {
    format!("depth/frame_{frame:04}.fr32")
}

/// One site; one annotated pair `(onset - 1, onset)` per distinct onset,
/// holding that onset's event polygons in generation order.
fn build_manifest(config: &SynthConfig, events: &[SynthEvent]) -> Manifest {
    let frames = (0..config.n_frames)
        .map(|i| Frame {
            index: i,
            timestamp: config.start_time + i64::from(i) * config.frame_interval,
            image_path: image_path(i),
        })
        .collect();
    let mut onsets: Vec<u32> = events.iter().map(|e| e.onset).collect();
    onsets.sort_unstable();
    onsets.dedup();
    let annotated_pairs = onsets
        .into_iter()
        .map(|onset| AnnotatedPair {
            frame_a: onset - 1,
            frame_b: onset,
            polygons: events.iter().filter(|e| e.onset == onset).map(|e| e.region.clone()).collect(),
        })
        .collect();
    Manifest {
        schema_version: SCHEMA_VERSION,
        sites: vec![Site {
            name: SITE_NAME.into(),
            split: Split::Test,
            width: config.width,
            height: config.height,
            frames,
            annotated_pairs,
        }],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefinitionViolation {
    /// An event pixel lacks two later frames within `tau` that both differ
    /// from frame `onset - 1` by more than epsilon.
    EventNotRealized {
        event: usize,
        x: u32,
        y: u32,
    },
    /// A pixel outside every event region meets the change condition from frame `i`.
    SpuriousChange {
        x: u32,
        y: u32,
        i: u32,
    },
    DimensionMismatch {
        frame: usize,
    },
    OnsetOutOfRange {
        event: usize,
        onset: u32,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefinitionCheck {
    pub violations: Vec<DefinitionViolation>,
}

impl DefinitionCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Whether the change condition holds at pixel index `p` starting from
/// frame `i`: at least two frames `j < k` in `(i, i + tau)` each differ from
/// frame `i` by more than `epsilon`.
fn condition_at(frames: &[FloatRaster], p: usize, i: usize, epsilon: f64, tau: u32) -> bool {
    let zi = f64::from(frames[i].values()[p]);
    let end = (i + tau as usize).min(frames.len());
    (i + 1..end).filter(|&j| (f64::from(frames[j].values()[p]) - zi).abs() > epsilon).nth(1).is_some()
}

/// Exhaustively checks that every event pixel changes per the volumetric
/// definition at its onset, and that no other pixel ever does.
pub fn verify_definition(depth: &DepthStack, events: &[SynthEvent], epsilon: f64, tau: u32) -> DefinitionCheck {
    let mut violations = Vec::new();
    let Some(first) = depth.frames.first() else {
        return DefinitionCheck { violations };
    };
    let (w, h) = first.dims();
    for (frame, f) in depth.frames.iter().enumerate() {
        if f.dims() != (w, h) {
            violations.push(DefinitionViolation::DimensionMismatch { frame });
        }
    }
    if !violations.is_empty() {
        return DefinitionCheck { violations };
    }
    let n = depth.frames.len();
    let mut in_event = vec![false; (w * h) as usize];
    for (index, e) in events.iter().enumerate() {
        if e.onset == 0 || e.onset as usize >= n {
            violations.push(DefinitionViolation::OnsetOutOfRange { event: index, onset: e.onset });
            continue;
        }
        let Ok(mask) = rasterize_polygon(&e.region, w, h) else { continue };
        for (p, set) in mask.bits().iter().enumerate() {
            if !set {
                continue;
            }
            in_event[p] = true;
            if !condition_at(&depth.frames, p, e.onset as usize - 1, epsilon, tau) {
                violations.push(DefinitionViolation::EventNotRealized {
                    event: index,
                    x: p as u32 % w,
                    y: p as u32 / w,
                });
            }
        }
    }
    for (p, inside) in in_event.iter().enumerate() {
        if *inside {
            continue;
        }
        if let Some(i) = (0..n).find(|&i| condition_at(&depth.frames, p, i, epsilon, tau)) {
            violations.push(DefinitionViolation::SpuriousChange { x: p as u32 % w, y: p as u32 / w, i: i as u32 });
        }
    }
    DefinitionCheck { violations }
}
