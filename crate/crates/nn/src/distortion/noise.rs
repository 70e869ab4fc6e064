use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tch::Tensor;

use super::per_sample;
use crate::{Error, Result};

/// Additive `N(0, sigma^2)` noise drawn from `rng`, then clamped. A full
/// noise field is consumed from the stream even when every sigma is zero, so
/// the stream position depends only on the image size.
pub fn gaussian_noise(x: &Tensor, sigmas: &[f64], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::Distortion(format!("noise sigma {s} must be finite and >= 0")));
    }
    let sigma = per_sample(x, sigmas, 1)?;
    let count = x.numel();
    let field: Vec<f32> = (0..count).map(|_| rng.sample(StandardNormal)).collect();
    let field = Tensor::from_slice(&field)
        .view(x.size().as_slice())
        .to_kind(x.kind())
        .to_device(x.device());
    Ok((x + field * sigma).clamp(0.0, 1.0))
}
