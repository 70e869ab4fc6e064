//! Brightness offset, mid-gray anchored contrast and luma anchored
//! saturation.

use tch::Tensor;

use super::per_sample;
use crate::Result;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn luma(x: &Tensor) -> Tensor {
    let w = Tensor::from_slice(&LUMA)
        .view([1, 3, 1, 1])
        .to_kind(x.kind())
        .to_device(x.device());
    (x * w).sum_dim_intlist([1i64].as_slice(), true, x.kind())
}

/// The three adjustments in order, clamped once at the end.
pub fn photometric_affine(x: &Tensor, b: &[f64], c: &[f64], s: &[f64]) -> Result<Tensor> {
    let b = per_sample(x, b, 1)?;
    let c = per_sample(x, c, 1)?;
    let s = per_sample(x, s, 1)?;
    let y = x + b;
    let y = (y - 0.5) * (c + 1.0) + 0.5;
    let l = luma(&y);
    let y = &l + (s + 1.0) * (&y - &l);
    Ok(y.clamp(0.0, 1.0))
}

pub fn brightness(x: &Tensor, b: &[f64]) -> Result<Tensor> {
    let zero = vec![0.0; b.len()];
    photometric_affine(x, b, &zero, &zero)
}

pub fn contrast(x: &Tensor, c: &[f64]) -> Result<Tensor> {
    let zero = vec![0.0; c.len()];
    photometric_affine(x, &zero, c, &zero)
}

pub fn saturation(x: &Tensor, s: &[f64]) -> Result<Tensor> {
    let zero = vec![0.0; s.len()];
    photometric_affine(x, &zero, &zero, s)
}
