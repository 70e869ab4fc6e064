//! Differentiable distortion stack between the ISP output and the decoder.
//! Every stage takes `[N, 3, H, W]` images in `[0, 1]` with one parameter set
//! per sample and returns images in `[0, 1]`.

pub mod jpeg;
pub mod kelvin;
pub mod noise;
pub mod photometric;
pub mod schedule;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::Tensor;

pub use jpeg::jpeg_differentiable;
pub use kelvin::{color_temperature, kelvin_to_rgb, NEUTRAL_KELVIN};
pub use noise::gaussian_noise;
pub use photometric::{brightness, contrast, photometric_affine, saturation};
pub use schedule::{sample_params, ParamBounds, Schedule, SWEEP_LEVELS};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    Kelvin,
    Jpeg,
    Brightness,
    Contrast,
    Saturation,
    Noise,
}

impl DistortionKind {
    /// Pipeline order.
    pub const ALL: [DistortionKind; 6] = [
        DistortionKind::Kelvin,
        DistortionKind::Jpeg,
        DistortionKind::Brightness,
        DistortionKind::Contrast,
        DistortionKind::Saturation,
        DistortionKind::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Kelvin => "kelvin",
            DistortionKind::Jpeg => "jpeg",
            DistortionKind::Brightness => "brightness",
            DistortionKind::Contrast => "contrast",
            DistortionKind::Saturation => "saturation",
            DistortionKind::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Distortion(format!("unknown distortion kind `{s}`")))
    }
}

impl std::fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    pub kelvin: f64,
    pub jpeg_quality: u8,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub sigma: f64,
}

impl DistortionParams {
    pub fn identity() -> Self {
        Self {
            kelvin: NEUTRAL_KELVIN,
            jpeg_quality: 100,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            sigma: 0.0,
        }
    }

    /// Keep only the knob for `kind`, every other knob at identity.
    pub fn only(&self, kind: DistortionKind) -> Self {
        let mut p = Self::identity();
        match kind {
            DistortionKind::Kelvin => p.kelvin = self.kelvin,
            DistortionKind::Jpeg => p.jpeg_quality = self.jpeg_quality,
            DistortionKind::Brightness => p.brightness = self.brightness,
            DistortionKind::Contrast => p.contrast = self.contrast,
            DistortionKind::Saturation => p.saturation = self.saturation,
            DistortionKind::Noise => p.sigma = self.sigma,
        }
        p
    }
}

/// Parameters drawn for one sweep cell, enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub kind: DistortionKind,
    pub level: u8,
    pub seed: u64,
    pub params: Vec<DistortionParams>,
}

/// Broadcastable `[N, channels, 1, 1]` tensor from `N * channels` values.
pub(crate) fn per_sample(x: &Tensor, values: &[f64], channels: i64) -> Result<Tensor> {
    let n = x.size()[0];
    if values.len() as i64 != n * channels {
        return Err(Error::Distortion(format!(
            "{} parameter values for a batch of {n} (expected {})",
            values.len(),
            n * channels
        )));
    }
    Ok(Tensor::from_slice(values)
        .view([n, channels, 1, 1])
        .to_kind(x.kind())
        .to_device(x.device()))
}

fn check_rgb(x: &Tensor) -> Result<()> {
    let size = x.size();
    if size.len() != 4 || size[1] != 3 {
        return Err(Error::Distortion(format!("expected [N, 3, H, W], got {size:?}")));
    }
    Ok(())
}

fn column<T: Copy>(params: &[DistortionParams], f: impl Fn(&DistortionParams) -> T) -> Vec<T> {
    params.iter().map(f).collect()
}

/// Colour temperature, JPEG, brightness, contrast, saturation, noise.
pub fn apply_pipeline(
    x: &Tensor,
    params: &[DistortionParams],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    check_rgb(x)?;
    let y = color_temperature(x, &column(params, |p| p.kelvin))?;
    let y = jpeg_differentiable(&y, &column(params, |p| p.jpeg_quality))?;
    let y = photometric_affine(
        &y,
        &column(params, |p| p.brightness),
        &column(params, |p| p.contrast),
        &column(params, |p| p.saturation),
    )?;
    gaussian_noise(&y, &column(params, |p| p.sigma), rng)
}

/// Just the stage for `kind`, with that knob taken from `params`.
pub fn apply_single(
    kind: DistortionKind,
    x: &Tensor,
    params: &[DistortionParams],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    check_rgb(x)?;
    match kind {
        DistortionKind::Kelvin => color_temperature(x, &column(params, |p| p.kelvin)),
        DistortionKind::Jpeg => jpeg_differentiable(x, &column(params, |p| p.jpeg_quality)),
        DistortionKind::Brightness => brightness(x, &column(params, |p| p.brightness)),
        DistortionKind::Contrast => contrast(x, &column(params, |p| p.contrast)),
        DistortionKind::Saturation => saturation(x, &column(params, |p| p.saturation)),
        DistortionKind::Noise => gaussian_noise(x, &column(params, |p| p.sigma), rng),
    }
}
