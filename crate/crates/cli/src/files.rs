use std::fs;
use std::path::{Path, PathBuf};

use voldet_core::datamodel::parse_manifest;
use voldet_core::raster::{decode_float, decode_mask, decode_rgb_png, encode_mask_png};
use voldet_core::{BinaryMask, FloatRaster, Manifest, RgbRaster};

use crate::error::{CliError, CliResult};

/// Absolute, symlink-free form of an existing input path.
pub fn resolve(path: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(path).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn load_manifest(path: &Path) -> CliResult<Manifest> {
    parse_manifest(&read(path)?).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn load_rgb(path: &Path) -> CliResult<RgbRaster> {
    decode_rgb_png(&read(path)?).map_err(|e| CliError::io(path, e))
}

pub fn load_float(path: &Path) -> CliResult<FloatRaster> {
    decode_float(&read(path)?).map_err(|e| CliError::io(path, e))
}

pub fn load_mask(path: &Path) -> CliResult<BinaryMask> {
    decode_mask(&read(path)?).map_err(|e| CliError::io(path, e))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> CliResult<()> {
    write(path, &encode_mask_png(mask).map_err(CliError::internal)?)
}

/// Directory that manifest image paths are relative to.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `<dir>/<site>/<frame_a>_<frame_b>.png`
pub fn prediction_path(dir: &Path, site: &str, frame_a: u32, frame_b: u32) -> PathBuf {
    dir.join(site).join(format!("{frame_a}_{frame_b}.png"))
}
