//! FR32 float rasters and 8-bit PNG masks/frames.
//!
//! FR32 layout: `b"FR32"`, width (u32 LE), height (u32 LE), then
//! `width * height` little-endian IEEE-754 f32 values in row-major order.

use std::io::Cursor;

use super::{checked_len, BinaryMask, FloatRaster, RasterError, RgbRaster};

pub const FR32_MAGIC: &[u8; 4] = b"FR32";
const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum DecodedRaster {
    Float(FloatRaster),
    Mask(BinaryMask),
}

pub fn encode_float(raster: &FloatRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * raster.values().len());
    out.extend_from_slice(FR32_MAGIC);
    out.extend_from_slice(&raster.width().to_le_bytes());
    out.extend_from_slice(&raster.height().to_le_bytes());
    for v in raster.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_float(bytes: &[u8]) -> Result<FloatRaster, RasterError> {
    if bytes.len() < 4 || &bytes[..4] != FR32_MAGIC {
        return Err(RasterError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(RasterError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = checked_len(width, height)?;
    let expected = n
        .checked_mul(4)
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or(RasterError::DimensionOverflow { width, height })?;
    if bytes.len() != expected {
        return Err(RasterError::Truncated { expected, actual: bytes.len() });
    }
    let values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    FloatRaster::new(width, height, values)
}

fn write_png(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| RasterError::PngEncode(e.to_string()))?;
        writer.write_image_data(data).map_err(|e| RasterError::PngEncode(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes any 8-bit (or expandable) PNG into `(width, height, channels, bytes)`.
fn read_png(bytes: &[u8]) -> Result<(u32, u32, usize, Vec<u8>), RasterError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| RasterError::PngDecode(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| RasterError::PngDecode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| RasterError::PngDecode(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(RasterError::UnsupportedPng(format!("{other:?}"))),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(RasterError::UnsupportedPng(format!("bit depth {:?}", info.bit_depth)));
    }
    checked_len(info.width, info.height)?;
    // Drop any row padding so the buffer is tightly packed.
    let row = info.width as usize * channels;
    let packed =
        if info.line_size == row { buf } else { buf.chunks(info.line_size).flat_map(|r| r[..row].to_vec()).collect() };
    Ok((info.width, info.height, channels, packed))
}

/// 8-bit grayscale PNG, 0 = no change, 255 = change.
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, RasterError> {
    let data: Vec<u8> = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    write_png(mask.width(), mask.height(), png::ColorType::Grayscale, &data)
}

/// Any value >= 128 decodes as change. Color PNGs are reduced to their first channel.
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask, RasterError> {
    if bytes.len() < 8 || &bytes[..8] != PNG_SIGNATURE {
        return Err(RasterError::BadMagic);
    }
    let (w, h, channels, data) = read_png(bytes)?;
    let bits = data.chunks_exact(channels).map(|p| p[0] >= 128).collect();
    BinaryMask::from_bits(w, h, bits)
}

pub fn encode_rgb_png(image: &RgbRaster) -> Result<Vec<u8>, RasterError> {
    write_png(image.width(), image.height(), png::ColorType::Rgb, image.data())
}

/// Grayscale inputs are replicated across channels; alpha is dropped.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbRaster, RasterError> {
    if bytes.len() < 8 || &bytes[..8] != PNG_SIGNATURE {
        return Err(RasterError::BadMagic);
    }
    let (w, h, channels, data) = read_png(bytes)?;
    let rgb = match channels {
        3 => data,
        4 => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        _ => data.chunks_exact(channels).flat_map(|p| [p[0]; 3]).collect(),
    };
    RgbRaster::new(w, h, rgb)
}

pub fn encode_raster(raster: &DecodedRaster) -> Result<Vec<u8>, RasterError> {
    match raster {
        DecodedRaster::Float(r) => Ok(encode_float(r)),
        DecodedRaster::Mask(m) => encode_mask_png(m),
    }
}

/// Dispatches on the leading magic bytes.
pub fn decode_raster(bytes: &[u8]) -> Result<DecodedRaster, RasterError> {
    if bytes.starts_with(FR32_MAGIC) {
        decode_float(bytes).map(DecodedRaster::Float)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_mask(bytes).map(DecodedRaster::Mask)
    } else {
        Err(RasterError::BadMagic)
    }
}
