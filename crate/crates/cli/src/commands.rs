use std::ffi::OsString;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use voldet_core::baseline::BaselineError;
use voldet_core::changemap::ChangeMapError;
use voldet_core::datamodel::{
    labeled_pairs, mix_ratio_plan, parse_manifest_lenient, sample_unlabeled_pairs, validate as validate_manifest, Site,
};
use voldet_core::metrics::{render_csv, MetricsError};
use voldet_core::raster::{encode_float, encode_rgb_png, RasterError};
use voldet_core::synth::{depth_path, image_path, SynthError};
use voldet_core::{
    aggregate, derive_change_map, detect as run_detector, generate, BinaryMask, DetectorConfig, LabeledPair, Manifest,
    MetricsReport, PairEvaluation, ScoreSource, SynthConfig,
};

use crate::error::{CliError, CliResult};
use crate::files::{self, prediction_path, resolve};
use crate::{
    DetectArgs, EvaluateArgs, Globals, IngestArgs, IngestKind, ReportArgs, SamplePairsArgs, SynthArgs, ValidateArgs,
};

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn print_config(command: &str, config: &Value) {
    eprintln!("voldet {command}: effective config {config}");
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

/// Unwraps per-item results computed in parallel, reporting the first failure
/// in item order so errors do not depend on thread scheduling.
fn in_order<T>(results: Vec<CliResult<T>>) -> CliResult<Vec<T>> {
    results.into_iter().collect()
}

fn raster_error(e: RasterError) -> CliError {
    match e {
        RasterError::DimensionMismatch { .. } | RasterError::NonFinite { .. } => CliError::validation(e),
        _ => CliError::internal(e),
    }
}

fn baseline_error(e: BaselineError) -> CliError {
    match e {
        BaselineError::Raster(r) => raster_error(r),
        BaselineError::BlockTooLarge { .. } => CliError::validation(e),
        _ => CliError::usage(e),
    }
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::Threshold(_) => CliError::usage(e),
        MetricsError::Raster(r) => raster_error(r),
        MetricsError::PolygonOutOfBounds { .. } | MetricsError::EmptyAggregate => CliError::validation(e),
        MetricsError::OracleTooLarge { .. } => CliError::internal(e),
    }
}

pub fn validate(args: &ValidateArgs) -> CliResult<()> {
    let bytes = files::read(&args.manifest)?;
    let manifest = parse_manifest_lenient(&bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.manifest.display())))?;
    let report = validate_manifest(&manifest);
    print!("{report}");
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{} has {} violation(s)", args.manifest.display(), report.violations.len())))
    }
}

pub fn sample_pairs(args: &SamplePairsArgs, g: &Globals) -> CliResult<()> {
    let manifest_path = resolve(&args.manifest)?;
    let manifest = files::load_manifest(&manifest_path)?;
    let seed = g.seed.unwrap_or(0);
    let labeled = labeled_pairs(&manifest, args.split, true);
    let count = match args.count {
        Some(c) => c,
        None => mix_ratio_plan(labeled.len(), args.labeled_fraction).map_err(CliError::usage)?,
    };
    let config = json!({
        "command": "sample-pairs",
        "manifest": path_str(&manifest_path),
        "split": args.split,
        "max_gap": args.max_gap,
        "labeled_fraction": args.labeled_fraction,
        "count": count,
        "seed": seed,
    });
    print_config("sample-pairs", &config);
    let unlabeled = sample_unlabeled_pairs(&manifest, args.split, args.max_gap, count, seed);
    if unlabeled.len() < count {
        log::warn!("only {} eligible unlabeled pairs, {count} requested", unlabeled.len());
    }
    let labeled: Vec<_> = labeled.into_iter().map(|l| l.pair).collect();
    files::write_json(&args.out, &json!({ "config": config, "labeled": labeled, "unlabeled": unlabeled }))
}

fn detector_config(args: &DetectArgs, g: &Globals) -> CliResult<DetectorConfig> {
    let mut c = if args.calibrated { DetectorConfig::calibrated_ncc() } else { DetectorConfig::default() };
    if let Some(m) = args.method {
        c.method = m;
    }
    if let Some(b) = args.block {
        c.block = b;
    }
    if let Some(s) = args.stride {
        c.stride = Some(s);
    }
    if let Some(r) = args.rule {
        c.rule = r;
    }
    if let Some(a) = args.min_area {
        c.min_area = a;
    }
    c.patch = g.patch;
    c.overlap = g.overlap;
    c.validate().map_err(CliError::usage)?;
    Ok(c)
}

fn site_frame_path(root: &Path, site: &Site, index: u32) -> CliResult<PathBuf> {
    site.frame(index)
        .map(|f| root.join(&f.image_path))
        .ok_or_else(|| CliError::validation(format!("site {:?} has no frame {index}", site.name)))
}

fn detect_pair(root: &Path, manifest: &Manifest, pair: &LabeledPair, config: &DetectorConfig) -> CliResult<BinaryMask> {
    let p = &pair.pair;
    let site = manifest.site(&p.site).ok_or_else(|| CliError::internal(format!("unknown site {:?}", p.site)))?;
    let a = files::load_rgb(&site_frame_path(root, site, p.frame_a)?)?;
    let b = files::load_rgb(&site_frame_path(root, site, p.frame_b)?)?;
    if a.dims() != (site.width, site.height) || b.dims() != (site.width, site.height) {
        return Err(CliError::validation(format!(
            "site {:?} pair {}-{}: images do not match the declared {}x{}",
            site.name, p.frame_a, p.frame_b, site.width, site.height
        )));
    }
    run_detector(&a, &b, config).map_err(baseline_error)
}

pub fn detect(args: &DetectArgs, g: &Globals) -> CliResult<()> {
    let config = detector_config(args, g)?;
    let detector = serde_json::to_value(&config).map_err(CliError::internal)?;
    if let (Some(image_a), Some(image_b)) = (&args.image_a, &args.image_b) {
        let (image_a, image_b) = (resolve(image_a)?, resolve(image_b)?);
        print_config(
            "detect",
            &json!({
                "command": "detect",
                "image_a": path_str(&image_a),
                "image_b": path_str(&image_b),
                "detector": detector,
            }),
        );
        let a = files::load_rgb(&image_a)?;
        let b = files::load_rgb(&image_b)?;
        let mask = run_detector(&a, &b, &config).map_err(baseline_error)?;
        return files::write_mask(&args.out, &mask);
    }
    let manifest_path = resolve(args.manifest.as_deref().expect("clap requires --manifest without --image-a"))?;
    let manifest = files::load_manifest(&manifest_path)?;
    print_config(
        "detect",
        &json!({
            "command": "detect",
            "manifest": path_str(&manifest_path),
            "split": args.split,
            "detector": detector,
        }),
    );
    let root = files::manifest_root(&manifest_path);
    let pairs = labeled_pairs(&manifest, args.split, false);
    let masks: Vec<BinaryMask> =
        in_order(pairs.par_iter().map(|pair| detect_pair(&root, &manifest, pair, &config)).collect())?;
    for (pair, mask) in pairs.iter().zip(&masks) {
        let p = &pair.pair;
        files::write_mask(&prediction_path(&args.out, &p.site, p.frame_a, p.frame_b), mask)?;
    }
    log::info!("wrote {} masks under {}", masks.len(), args.out.display());
    Ok(())
}

pub fn ingest(args: &IngestArgs, g: &Globals) -> CliResult<()> {
    let input = resolve(&args.input)?;
    let input_b = args.input_b.as_deref().map(resolve).transpose()?;
    args.rule.validate().map_err(CliError::usage)?;
    let first = files::load_float(&input)?;
    let source = match args.kind {
        IngestKind::Confidence => ScoreSource::Confidence(first),
        IngestKind::Activation => ScoreSource::Activation(first),
        IngestKind::Depth => {
            let b = input_b.as_deref().expect("clap requires --input-b for depth");
            ScoreSource::DepthPair(first, files::load_float(b)?)
        }
    };
    let (in_w, in_h) = match &source {
        ScoreSource::Confidence(r) | ScoreSource::Activation(r) | ScoreSource::DepthPair(r, _) => r.dims(),
    };
    let (w, h) = (args.width.unwrap_or(in_w), args.height.unwrap_or(in_h));
    print_config(
        "ingest",
        &json!({
            "command": "ingest",
            "kind": args.kind,
            "input": path_str(&input),
            "input_b": input_b.as_deref().map(path_str),
            "rule": args.rule,
            "min_area": args.min_area,
            "width": w,
            "height": h,
            "patch": g.patch,
            "overlap": g.overlap,
        }),
    );
    let mask = derive_change_map(&source, args.rule, args.min_area, w, h).map_err(|e| match e {
        ChangeMapError::Raster(r) => raster_error(r),
        ChangeMapError::Rule(r) => CliError::usage(r),
    })?;
    files::write_mask(&args.out, &mask)
}

/// Scores every annotated pair of `split` against the masks in `predictions`.
/// Missing masks count as empty predictions and are flagged.
pub fn evaluate_pairs(
    manifest: &Manifest,
    split: voldet_core::Split,
    predictions: &Path,
    iou_threshold: f64,
) -> CliResult<Vec<PairEvaluation>> {
    let pairs = labeled_pairs(manifest, split, false);
    in_order(
        pairs
            .par_iter()
            .map(|pair| {
                let p = &pair.pair;
                let site =
                    manifest.site(&p.site).ok_or_else(|| CliError::internal(format!("unknown site {:?}", p.site)))?;
                let path = prediction_path(predictions, &p.site, p.frame_a, p.frame_b);
                let (mask, missing) = if path.exists() {
                    (files::load_mask(&path)?, false)
                } else {
                    log::warn!("missing prediction {}; scoring it as empty", path.display());
                    (BinaryMask::new(site.width, site.height).map_err(CliError::validation)?, true)
                };
                if mask.dims() != (site.width, site.height) {
                    return Err(CliError::validation(format!(
                        "{}: mask is {}x{}, site {:?} is {}x{}",
                        path.display(),
                        mask.width(),
                        mask.height(),
                        site.name,
                        site.width,
                        site.height
                    )));
                }
                PairEvaluation::compute(&p.site, p.frame_a, p.frame_b, &mask, &pair.polygons, iou_threshold, missing)
                    .map_err(metrics_error)
            })
            .collect::<Vec<_>>(),
    )
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let manifest_path = resolve(&args.manifest)?;
    let predictions = resolve(&args.predictions)?;
    let manifest = files::load_manifest(&manifest_path)?;
    let config = json!({
        "command": "evaluate",
        "manifest": path_str(&manifest_path),
        "predictions": path_str(&predictions),
        "split": args.split,
        "iou_threshold": args.iou_threshold,
        "model": args.model,
    });
    print_config("evaluate", &config);
    let pairs = evaluate_pairs(&manifest, args.split, &predictions, args.iou_threshold)?;
    let report = aggregate(&args.model, config, &pairs).map_err(metrics_error)?;
    let missing = pairs.iter().filter(|p| p.missing_prediction).count();
    if missing > 0 {
        log::warn!("{missing} of {} annotated pairs had no prediction", pairs.len());
    }
    files::write(&with_suffix(&args.out, ".json"), report.to_json().as_bytes())?;
    files::write(&with_suffix(&args.out, ".csv"), report.to_csv().as_bytes())
}

pub fn synth(args: &SynthArgs, g: &Globals) -> CliResult<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => {
            let path = resolve(path)?;
            serde_json::from_slice(&files::read(&path)?)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    let config_json = serde_json::to_value(&config).map_err(CliError::internal)?;
    print_config("synth", &json!({ "command": "synth", "synth": config_json }));
    let seq = generate(&config).map_err(|e| match e {
        SynthError::Config(_) => CliError::usage(e),
        SynthError::Placement { .. } => CliError::validation(e),
    })?;
    let encoded: Vec<CliResult<(Vec<u8>, Vec<u8>)>> = seq
        .images
        .par_iter()
        .zip(&seq.depth.frames)
        .map(|(img, depth)| Ok((encode_rgb_png(img).map_err(CliError::internal)?, encode_float(depth))))
        .collect();
    let encoded = in_order(encoded)?;
    for (i, (png, fr32)) in encoded.iter().enumerate() {
        files::write(&args.out.join(image_path(i as u32)), png)?;
        files::write(&args.out.join(depth_path(i as u32)), fr32)?;
    }
    files::write(&args.out.join("manifest.json"), &voldet_core::datamodel::serialize_manifest(&seq.manifest))?;
    files::write_json(&args.out.join("events.json"), &seq.events)?;
    files::write_json(&args.out.join("synth_config.json"), &config)
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = String::from_utf8(files::read(path)?)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        reports.push(
            MetricsReport::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?,
        );
    }
    let csv = render_csv(&reports);
    match &args.out {
        Some(out) => files::write(out, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
