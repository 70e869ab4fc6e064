//! Baseline JPEG helpers: the Annex K quantisation tables with IJG quality
//! scaling, and a real encode/decode round trip (4:4:4).

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};

use crate::{Error, Result, RgbImage};

/// Annex K.1 luminance table, natural (row-major) order.
pub const LUMA_QTABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K.2 chrominance table, natural order.
pub const CHROMA_QTABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

fn check_quality(quality: u8) -> Result<()> {
    if !(1..=100).contains(&quality) {
        return Err(Error::JpegQuality(quality));
    }
    Ok(())
}

/// IJG scaling: `5000/q` below 50, `200 - 2q` otherwise, entries clamped to
/// `1..=255`.
pub fn scaled_table(base: &[u16; 64], quality: u8) -> Result<[u16; 64]> {
    check_quality(quality)?;
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(out)
}

/// Encode to a real baseline JPEG at `quality` and decode it again.
pub fn jpeg_round_trip(rgb: &RgbImage, quality: u8) -> Result<RgbImage> {
    check_quality(quality)?;
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(
            &rgb.to_u8(),
            rgb.width() as u32,
            rgb.height() as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Jpeg(e.to_string()))?;
    let decoded = image::load(Cursor::new(buf), ImageFormat::Jpeg)
        .map_err(|e| Error::Jpeg(e.to_string()))?
        .to_rgb8();
    RgbImage::from_u8(decoded.as_raw(), rgb.height(), rgb.width())
}
