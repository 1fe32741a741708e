//! Volumetric change detection for time-lapse imagery: dataset manifests,
//! raster primitives, patch tiling, score-to-mask recipes, classical
//! baselines, pixel and event-level evaluation, and a synthetic generator
//! with exact ground truth.

pub mod baseline;
pub mod changemap;
pub mod datamodel;
pub mod metrics;
pub mod polygon;
pub mod raster;
pub mod synth;
pub mod tiling;

pub use baseline::{detect, DetectorConfig, Method};
pub use changemap::{derive_change_map, ScoreSource, ThresholdRule};
pub use datamodel::{FramePair, LabeledPair, Manifest, Split};
pub use metrics::{aggregate, event_match, Confusion, EventMatchOutcome, MetricsReport, PairEvaluation};
pub use polygon::PolygonAnnotation;
pub use raster::{BinaryMask, FloatRaster, RasterError, RgbRaster};
pub use synth::{generate, SynthConfig, SynthSequence};
pub use tiling::{plan_grid, PatchGrid};
