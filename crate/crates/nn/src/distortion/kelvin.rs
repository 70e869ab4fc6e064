//! Colour temperature cast from a blackbody fit of per-channel Kelvin
//! values (piecewise log/power curves in units of 100 K, channels 0..255).

use tch::Tensor;

use super::per_sample;
use crate::{Error, Result};

pub const MIN_KELVIN: f64 = 1000.0;
pub const MAX_KELVIN: f64 = 12000.0;
/// Temperature at which all three channel values saturate at 255.
pub const NEUTRAL_KELVIN: f64 = 6600.0;

/// `(r_t, g_t, b_t)` in `[0, 255]` for a temperature in Kelvin.
pub fn kelvin_to_rgb(kelvin: f64) -> [f64; 3] {
    let t = kelvin / 100.0;
    let r = if t <= 66.0 {
        255.0
    } else {
        329.698_727_446 * (t - 60.0).powf(-0.133_204_759_2)
    };
    let g = if t <= 66.0 {
        99.470_802_586_1 * t.ln() - 161.119_568_166_1
    } else {
        288.122_169_528_3 * (t - 60.0).powf(-0.075_514_849_2)
    };
    let b = if t >= 66.0 {
        255.0
    } else if t <= 19.0 {
        0.0
    } else {
        138.517_731_223_1 * (t - 10.0).ln() - 305.044_792_730_7
    };
    [r, g, b].map(|v| v.clamp(0.0, 255.0))
}

/// Scale each channel by `value / 255` for the sample's temperature, then
/// clamp. `x` is `[N, 3, H, W]`, one temperature per sample.
pub fn color_temperature(x: &Tensor, kelvins: &[f64]) -> Result<Tensor> {
    if let Some(k) = kelvins
        .iter()
        .find(|k| !(MIN_KELVIN..=MAX_KELVIN).contains(*k))
    {
        return Err(Error::Distortion(format!(
            "temperature {k} K outside [{MIN_KELVIN}, {MAX_KELVIN}]"
        )));
    }
    let gains: Vec<f64> = kelvins
        .iter()
        .flat_map(|&k| kelvin_to_rgb(k).map(|v| v / 255.0))
        .collect();
    let gains = per_sample(x, &gains, 3)?;
    Ok((x * gains).clamp(0.0, 1.0))
}
