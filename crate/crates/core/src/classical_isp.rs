//! Deterministic reference ISP: bilinear demosaic, white balance, sRGB
//! encoding and optional JPEG. No colour-correction matrix.

use serde::{Deserialize, Serialize};

use crate::jpeg::jpeg_round_trip;
use crate::{BayerRaw, Error, Result, RgbImage};

/// Gains used by the `daylight` preset, `(r, g, b)`.
pub const DAYLIGHT_GAINS: [f32; 3] = [2.0, 1.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum WhiteBalance {
    /// Gray world: scale the red and blue means onto the green mean.
    Auto,
    /// As-shot gains supplied by the caller (normally from configuration).
    Camera { gains: [f32; 3] },
    /// Fixed [`DAYLIGHT_GAINS`].
    Daylight,
}

impl WhiteBalance {
    pub fn name(&self) -> &'static str {
        match self {
            WhiteBalance::Auto => "auto",
            WhiteBalance::Camera { .. } => "camera",
            WhiteBalance::Daylight => "daylight",
        }
    }

    /// Resolve to strictly positive gains with green normalised to 1.
    pub fn gains(&self, raw: &BayerRaw) -> Result<[f32; 3]> {
        let gains = match *self {
            WhiteBalance::Auto => gray_world_gains(raw),
            WhiteBalance::Camera { gains } => gains,
            WhiteBalance::Daylight => DAYLIGHT_GAINS,
        };
        if gains.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::NonPositiveGains(gains));
        }
        Ok([gains[0] / gains[1], 1.0, gains[2] / gains[1]])
    }
}

/// Per-channel means over the mosaic sites, `(r, g, b)`.
pub fn channel_means(raw: &BayerRaw) -> [f64; 3] {
    let mut sum = [0f64; 3];
    let mut count = [0usize; 3];
    for y in 0..raw.height() {
        for x in 0..raw.width() {
            let c = site_channel(y, x);
            sum[c] += f64::from(raw.get(y, x));
            count[c] += 1;
        }
    }
    [0, 1, 2].map(|c| sum[c] / count[c] as f64)
}

/// Gray-world gains. A channel with zero mean cannot be balanced and keeps
/// gain 1.
pub fn gray_world_gains(raw: &BayerRaw) -> [f32; 3] {
    let means = channel_means(raw);
    let g = means[1];
    means.map(|m| {
        if m > 0.0 && g > 0.0 {
            (g / m) as f32
        } else {
            1.0
        }
    })
}

#[inline]
fn site_channel(y: usize, x: usize) -> usize {
    match (y % 2, x % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Mirror index without repeating the edge sample, so a padded sample keeps
/// the colour of the site it stands in for.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j.clamp(0, n - 1) as usize
}

/// Bilinear demosaic of an RGGB mosaic.
pub fn bilinear_demosaic(raw: &BayerRaw) -> RgbImage {
    let (h, w) = (raw.height(), raw.width());
    let at = |y: isize, x: isize| raw.get(mirror(y, h), mirror(x, w));
    let mut out = Vec::with_capacity(h * w * 3);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(y, x);
            let cross = 0.25 * (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1));
            let diag =
                0.25 * (at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1));
            let horiz = 0.5 * (at(y, x - 1) + at(y, x + 1));
            let vert = 0.5 * (at(y - 1, x) + at(y + 1, x));
            let px = match (y % 2, x % 2) {
                (0, 0) => [c, cross, diag],
                (0, _) => [horiz, c, vert],
                (_, 0) => [vert, c, horiz],
                _ => [diag, cross, c],
            };
            out.extend_from_slice(&px);
        }
    }
    RgbImage::new(out, h, w).expect("bilinear weights preserve [0, 1]")
}

/// Piecewise sRGB transfer curve.
#[inline]
pub fn srgb_encode(linear: f32) -> f32 {
    let v = linear.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
    .clamp(0.0, 1.0)
}

/// Full classical development of a mosaic.
pub fn develop(raw: &BayerRaw, wb: WhiteBalance, jpeg_quality: Option<u8>) -> Result<RgbImage> {
    let gains = wb.gains(raw)?;
    let rgb = bilinear_demosaic(raw);
    let (h, w) = (rgb.height(), rgb.width());
    let data = rgb
        .into_data()
        .chunks_exact(3)
        .flat_map(|p| [0, 1, 2].map(|c| srgb_encode(p[c] * gains[c])))
        .collect();
    let out = RgbImage::new(data, h, w)?;
    match jpeg_quality {
        Some(q) => jpeg_round_trip(&out, q),
        None => Ok(out),
    }
}
