//! Sampling ranges that widen as training advances, and the fixed ten-level
//! ladder used by the robustness sweep.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kelvin::{MAX_KELVIN, MIN_KELVIN};
use super::DistortionParams;
use crate::{Error, Result};

pub const SWEEP_LEVELS: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Schedule {
    Training { epoch: u32, total: u32 },
    Sweep { level: u8 },
}

/// Closed intervals for every knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub kelvin: (f64, f64),
    pub jpeg_quality: (u8, u8),
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub saturation: (f64, f64),
    pub sigma: (f64, f64),
}

impl Schedule {
    pub fn training(epoch: u32, total: u32) -> Result<Self> {
        let s = Schedule::Training { epoch, total };
        s.validate()?;
        Ok(s)
    }

    pub fn sweep(level: u8) -> Result<Self> {
        let s = Schedule::Sweep { level };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Training { total: 0, .. } => Err(Error::Distortion(
                "training schedule needs at least one epoch".into(),
            )),
            Schedule::Training { epoch, total } if epoch >= total => Err(Error::Distortion(
                format!("epoch {epoch} is past the last epoch of {total}"),
            )),
            Schedule::Sweep { level } if level >= SWEEP_LEVELS => Err(Error::Distortion(format!(
                "sweep level {level} outside 0..{SWEEP_LEVELS}"
            ))),
            _ => Ok(()),
        }
    }

    /// The epoch or level index that drives the JPEG quality floor.
    fn step(&self) -> u32 {
        match *self {
            Schedule::Training { epoch, .. } => epoch,
            Schedule::Sweep { level } => u32::from(level),
        }
    }

    /// `lambda - epoch` (at least 1) in training, `10 - level` in a sweep.
    pub fn denominator(&self) -> f64 {
        match *self {
            Schedule::Training { epoch, total } => f64::from(total.saturating_sub(epoch).max(1)),
            Schedule::Sweep { level } => f64::from(SWEEP_LEVELS - level),
        }
    }

    pub fn bounds(&self) -> ParamBounds {
        let d = self.denominator();
        let q_lo = (60.0 + 40.0 / (f64::from(self.step()) + 1.0)).ceil() as u8;
        ParamBounds {
            kelvin: (
                (6500.0 - 5500.0 / d).max(MIN_KELVIN),
                (6500.0 + 5500.0 / d).min(MAX_KELVIN),
            ),
            jpeg_quality: (q_lo, 100),
            brightness: (-0.3 / d, 0.3 / d),
            contrast: (-0.1 / d, 0.1 / d),
            saturation: (0.0, 0.1 / d),
            sigma: (0.0, 0.05 / d),
        }
    }
}

impl ParamBounds {
    pub fn contains(&self, p: &DistortionParams) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        within(p.kelvin, self.kelvin)
            && (self.jpeg_quality.0..=self.jpeg_quality.1).contains(&p.jpeg_quality)
            && within(p.brightness, self.brightness)
            && within(p.contrast, self.contrast)
            && within(p.saturation, self.saturation)
            && within(p.sigma, self.sigma)
    }
}

pub fn sample_params(schedule: &Schedule, rng: &mut ChaCha8Rng) -> Result<DistortionParams> {
    schedule.validate()?;
    let b = schedule.bounds();
    let mut u = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
    let kelvin = u(b.kelvin);
    let brightness = u(b.brightness);
    let contrast = u(b.contrast);
    let saturation = u(b.saturation);
    let sigma = u(b.sigma);
    let jpeg_quality = rng.random_range(b.jpeg_quality.0..=b.jpeg_quality.1);
    Ok(DistortionParams {
        kelvin,
        jpeg_quality,
        brightness,
        contrast,
        saturation,
        sigma,
    })
}
