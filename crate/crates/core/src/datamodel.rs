//! Dataset index: sites, splits, timestamped frames and annotated pairs.
//!
//! Manifests are UTF-8 JSON:
//!
//! ```json
//! {"schema_version": 1, "sites": [{"name": "...", "split": "train|validation|test",
//!   "width": 3850, "height": 1900,
//!   "frames": [{"index": 0, "timestamp": "2024-06-01T12:00:00Z", "image_path": "img/0.jpg"}],
//!   "annotated_pairs": [{"frame_a": 0, "frame_b": 1, "polygons": [[[x, y], ...]]}]}]}
//! ```
//!
//! Image paths are relative to the manifest's directory. An empty polygon
//! list marks a verified no-change pair.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polygon::PolygonAnnotation;

pub const SCHEMA_VERSION: u32 = 1;

/// One week, the default cap on the gap between frames of an unlabeled pair.
pub const ONE_WEEK_SECONDS: i64 = 7 * 24 * 3600;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnknownSchemaVersion(u32),
    #[error("duplicate site name {0:?}")]
    DuplicateSite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (train, validation, test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub sites: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub name: String,
    pub split: Split,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub annotated_pairs: Vec<AnnotatedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub index: u32,
    /// Seconds since the Unix epoch, UTC. ISO-8601 in the document.
    #[serde(with = "iso8601")]
    pub timestamp: i64,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedPair {
    pub frame_a: u32,
    pub frame_b: u32,
    #[serde(default)]
    pub polygons: Vec<PolygonAnnotation>,
}

/// Two frames of one site, `gap_seconds` apart.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FramePair {
    pub site: String,
    pub frame_a: u32,
    pub frame_b: u32,
    pub gap_seconds: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledPair {
    pub pair: FramePair,
    pub polygons: Vec<PolygonAnnotation>,
}

mod iso8601 {
    use chrono::{DateTime, SecondsFormat};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &i64, s: S) -> Result<S::Ok, S::Error> {
        let dt = DateTime::from_timestamp(*ts, 0)
            .ok_or_else(|| serde::ser::Error::custom(format!("timestamp {ts} out of range")))?;
        s.serialize_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|dt| dt.timestamp())
            .map_err(|e| D::Error::custom(format!("invalid ISO-8601 timestamp {raw:?}: {e}")))
    }
}

/// Parses a manifest document, rejecting unknown schema versions and
/// duplicate site names. Other invariants are left to [`validate`].
pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let manifest = parse_manifest_lenient(bytes)?;
    let mut seen = HashSet::new();
    for site in &manifest.sites {
        if !seen.insert(site.name.as_str()) {
            return Err(ManifestError::DuplicateSite(site.name.clone()));
        }
    }
    Ok(manifest)
}

/// Like [`parse_manifest`] but lets duplicate site names through so that
/// [`validate`] can report them alongside everything else.
pub fn parse_manifest_lenient(bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let manifest: Manifest = serde_json::from_slice(bytes)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(ManifestError::UnknownSchemaVersion(manifest.schema_version));
    }
    Ok(manifest)
}

pub fn serialize_manifest(manifest: &Manifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(manifest).expect("manifest serialization is infallible");
    out.push(b'\n');
    out
}

impl Manifest {
    pub fn site(&self, name: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.name == name)
    }
}

impl Site {
    pub fn frame(&self, index: u32) -> Option<&Frame> {
        self.frames.iter().find(|f| f.index == index)
    }

    fn timestamps(&self) -> HashMap<u32, i64> {
        self.frames.iter().map(|f| (f.index, f.timestamp)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateSite { site: String },
    SplitConflict { site: String, splits: Vec<Split> },
    EmptySiteName,
    ZeroDimensions { site: String },
    NegativeTimestamp { site: String, frame: u32 },
    EmptyImagePath { site: String, frame: u32 },
    DuplicateFrameIndex { site: String, frame: u32 },
    TimestampOrder { site: String, frame: u32 },
    PairOrder { site: String, pair: usize, frame_a: u32, frame_b: u32 },
    DanglingReference { site: String, pair: usize, frame: u32 },
    DuplicatePair { site: String, pair: usize },
    TooFewVertices { site: String, pair: usize, polygon: usize, vertices: usize },
    OutOfBounds { site: String, pair: usize, polygon: usize, vertex: [f64; 2] },
    SelfIntersecting { site: String, pair: usize, polygon: usize },
    ZeroArea { site: String, pair: usize, polygon: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateSite { site } => write!(f, "duplicate site name {site:?}"),
            SplitConflict { site, splits } => {
                let names: Vec<String> = splits.iter().map(Split::to_string).collect();
                write!(f, "split conflict: site {site:?} appears in {}", names.join(" and "))
            }
            EmptySiteName => write!(f, "site with empty name"),
            ZeroDimensions { site } => write!(f, "site {site:?}: width and height must be positive"),
            NegativeTimestamp { site, frame } => write!(f, "site {site:?} frame {frame}: timestamp before 1970"),
            EmptyImagePath { site, frame } => write!(f, "site {site:?} frame {frame}: empty image_path"),
            DuplicateFrameIndex { site, frame } => write!(f, "site {site:?}: frame index {frame} repeated"),
            TimestampOrder { site, frame } => {
                write!(f, "site {site:?} frame {frame}: timestamp not strictly after the previous frame")
            }
            PairOrder { site, pair, frame_a, frame_b } => {
                write!(f, "site {site:?} pair #{pair}: frame_a {frame_a} must precede frame_b {frame_b}")
            }
            DanglingReference { site, pair, frame } => {
                write!(f, "site {site:?} pair #{pair}: dangling reference to frame {frame}")
            }
            DuplicatePair { site, pair } => write!(f, "site {site:?} pair #{pair}: frame pair annotated twice"),
            TooFewVertices { site, pair, polygon, vertices } => {
                write!(f, "site {site:?} pair #{pair} polygon #{polygon}: {vertices} vertices (need >= 3)")
            }
            OutOfBounds { site, pair, polygon, vertex } => write!(
                f,
                "site {site:?} pair #{pair} polygon #{polygon}: vertex ({}, {}) out of bounds",
                vertex[0], vertex[1]
            ),
            SelfIntersecting { site, pair, polygon } => {
                write!(f, "site {site:?} pair #{pair} polygon #{polygon}: self-intersecting")
            }
            ZeroArea { site, pair, polygon } => {
                write!(f, "site {site:?} pair #{pair} polygon #{polygon}: zero rasterized area")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "valid: no violations");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Reports every invariant violation in `manifest`. Pure.
pub fn validate(manifest: &Manifest) -> ValidationReport {
    let mut out = Vec::new();

    let mut by_name: BTreeMap<&str, Vec<Split>> = BTreeMap::new();
    for site in &manifest.sites {
        by_name.entry(site.name.as_str()).or_default().push(site.split);
    }
    for (name, splits) in &by_name {
        if splits.len() < 2 {
            continue;
        }
        let mut distinct = splits.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() > 1 {
            out.push(Violation::SplitConflict { site: name.to_string(), splits: distinct });
        } else {
            out.push(Violation::DuplicateSite { site: name.to_string() });
        }
    }

    for site in &manifest.sites {
        validate_site(site, &mut out);
    }
    ValidationReport { violations: out }
}

fn validate_site(site: &Site, out: &mut Vec<Violation>) {
    let name = || site.name.clone();
    if site.name.is_empty() {
        out.push(Violation::EmptySiteName);
    }
    if site.width == 0 || site.height == 0 {
        out.push(Violation::ZeroDimensions { site: name() });
    }

    let mut indices = HashSet::new();
    let mut previous: Option<i64> = None;
    for frame in &site.frames {
        if !indices.insert(frame.index) {
            out.push(Violation::DuplicateFrameIndex { site: name(), frame: frame.index });
        }
        if frame.timestamp < 0 {
            out.push(Violation::NegativeTimestamp { site: name(), frame: frame.index });
        }
        if frame.image_path.is_empty() {
            out.push(Violation::EmptyImagePath { site: name(), frame: frame.index });
        }
        if previous.is_some_and(|p| frame.timestamp <= p) {
            out.push(Violation::TimestampOrder { site: name(), frame: frame.index });
        }
        previous = Some(frame.timestamp);
    }

    let (w, h) = (f64::from(site.width), f64::from(site.height));
    let mut seen_pairs = HashSet::new();
    for (p, pair) in site.annotated_pairs.iter().enumerate() {
        for frame in [pair.frame_a, pair.frame_b] {
            if !indices.contains(&frame) {
                out.push(Violation::DanglingReference { site: name(), pair: p, frame });
            }
        }
        if pair.frame_a >= pair.frame_b {
            out.push(Violation::PairOrder { site: name(), pair: p, frame_a: pair.frame_a, frame_b: pair.frame_b });
        }
        if !seen_pairs.insert((pair.frame_a, pair.frame_b)) {
            out.push(Violation::DuplicatePair { site: name(), pair: p });
        }
        for (k, poly) in pair.polygons.iter().enumerate() {
            if poly.len() < 3 {
                out.push(Violation::TooFewVertices { site: name(), pair: p, polygon: k, vertices: poly.len() });
                continue;
            }
            if let Some(v) = poly.vertices.iter().find(|v| !(v[0] >= 0.0 && v[0] <= w && v[1] >= 0.0 && v[1] <= h)) {
                out.push(Violation::OutOfBounds { site: name(), pair: p, polygon: k, vertex: *v });
            }
            if !poly.is_simple() {
                out.push(Violation::SelfIntersecting { site: name(), pair: p, polygon: k });
            } else if poly.raster_area() == 0 {
                out.push(Violation::ZeroArea { site: name(), pair: p, polygon: k });
            }
        }
    }
}

/// All annotated pairs of the sites in `split`, ordered by site name then
/// `(frame_a, frame_b)`. With `changes_only`, pairs without polygons are dropped.
pub fn labeled_pairs(manifest: &Manifest, split: Split, changes_only: bool) -> Vec<LabeledPair> {
    let mut out = Vec::new();
    for site in manifest.sites.iter().filter(|s| s.split == split) {
        let ts = site.timestamps();
        for pair in &site.annotated_pairs {
            if changes_only && pair.polygons.is_empty() {
                continue;
            }
            let (Some(ta), Some(tb)) = (ts.get(&pair.frame_a), ts.get(&pair.frame_b)) else {
                continue;
            };
            out.push(LabeledPair {
                pair: FramePair {
                    site: site.name.clone(),
                    frame_a: pair.frame_a,
                    frame_b: pair.frame_b,
                    gap_seconds: tb - ta,
                },
                polygons: pair.polygons.clone(),
            });
        }
    }
    out.sort_by(|a, b| a.pair.cmp(&b.pair));
    out
}

/// Every unannotated same-site pair of `split` with `0 < gap <= max_gap`,
/// in (site name, frame_a, frame_b) order.
pub fn eligible_unlabeled_pairs(manifest: &Manifest, split: Split, max_gap: i64) -> Vec<FramePair> {
    let mut sites: Vec<&Site> = manifest.sites.iter().filter(|s| s.split == split).collect();
    sites.sort_by(|a, b| a.name.cmp(&b.name));
    let mut pool = Vec::new();
    for site in sites {
        let annotated: HashSet<(u32, u32)> =
            site.annotated_pairs.iter().flat_map(|p| [(p.frame_a, p.frame_b), (p.frame_b, p.frame_a)]).collect();
        let mut frames: Vec<&Frame> = site.frames.iter().collect();
        frames.sort_by_key(|f| (f.timestamp, f.index));
        let mut site_pairs = Vec::new();
        for (i, a) in frames.iter().enumerate() {
            for b in &frames[i + 1..] {
                let gap = b.timestamp - a.timestamp;
                if gap > max_gap {
                    break;
                }
                if gap <= 0 || annotated.contains(&(a.index, b.index)) {
                    continue;
                }
                site_pairs.push(FramePair {
                    site: site.name.clone(),
                    frame_a: a.index,
                    frame_b: b.index,
                    gap_seconds: gap,
                });
            }
        }
        site_pairs.sort();
        pool.extend(site_pairs);
    }
    pool
}

/// Uniform integer in `0..n` from a ChaCha8 stream by rejection sampling,
/// so the result depends only on the stream and not on library internals.
fn uniform_below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Draws up to `count` distinct unannotated pairs uniformly from the eligible
/// pool of `split` (see [`eligible_unlabeled_pairs`]).
///
/// Sampling is a partial Fisher-Yates shuffle driven by
/// `ChaCha8Rng::seed_from_u64(seed)`; the result is sorted in pool order.
pub fn sample_unlabeled_pairs(
    manifest: &Manifest,
    split: Split,
    max_gap: i64,
    count: usize,
    seed: u64,
) -> Vec<FramePair> {
    let pool = eligible_unlabeled_pairs(manifest, split, max_gap);
    let k = count.min(pool.len());
    if k == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for i in 0..k {
        let j = i + uniform_below(&mut rng, order.len() - i);
        order.swap(i, j);
    }
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i].clone()).collect()
}

#[derive(Debug, Error, PartialEq)]
#[error("labeled fraction must lie in (0, 1], got {0}")]
pub struct InvalidFraction(pub f64);

/// Number of unlabeled pairs that makes `n_labeled` exactly `labeled_fraction`
/// of the mix, rounded half away from zero.
pub fn mix_ratio_plan(n_labeled: usize, labeled_fraction: f64) -> Result<usize, InvalidFraction> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(InvalidFraction(labeled_fraction));
    }
    let n = n_labeled as f64 * (1.0 - labeled_fraction) / labeled_fraction;
    Ok(n.round() as usize)
}
