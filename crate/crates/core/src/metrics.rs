//! Image quality and payload recovery metrics.
//!
//! PSNR uses `MAX = 1` and returns `f64::INFINITY` for identical inputs
//! instead of capping. SSIM is the single-scale Gaussian-window form on luma,
//! averaged over the windows that fit entirely inside the image. SER counts a
//! string as wrong when ECC decoding fails or returns a payload other than
//! the truth.

use crate::codec::{DecodeResult, Message, Payload};
use crate::raw::ImageData;
use crate::{Error, Result, RgbImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn same_shape<A: ImageData, B: ImageData>(a: &A, b: &B) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

pub fn mse<A: ImageData, B: ImageData>(a: &A, b: &B) -> Result<f64> {
    same_shape(a, b)?;
    let (va, vb) = (a.values(), b.values());
    let sum: f64 = va
        .iter()
        .zip(vb)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / va.len() as f64)
}

/// `10 log10(1 / MSE)` in dB.
pub fn psnr<A: ImageData, B: ImageData>(a: &A, b: &B) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    })
}

/// Normalised 1-D Gaussian taps of length [`SSIM_WINDOW`].
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0f64; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering of a row-major `h x w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// SSIM of two single-channel planes with `MAX = 1`.
pub fn ssim_gray(a: &[f64], b: &[f64], height: usize, width: usize) -> Result<f64> {
    if a.len() != height * width || b.len() != height * width {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height,
            width,
            window: SSIM_WINDOW,
        });
    }
    let k = gaussian_window();
    let f = |p: &[f64]| filter_valid(p, height, width, &k);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mu_a, mu_b) = (f(a), f(b));
    let (e_aa, e_bb, e_ab) = (f(&prod(a, a)), f(&prod(b, b)), f(&prod(a, b)));
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

fn luma_f64(img: &RgbImage) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

/// SSIM on Rec.601 luma.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    ssim_gray(&luma_f64(a), &luma_f64(b), a.height(), a.width())
}

/// Wrong bits over total bits across the batch.
pub fn ber(truth: &[Message], decoded: &[Message]) -> Result<f64> {
    if truth.len() != decoded.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: decoded.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong: usize = truth
        .iter()
        .zip(decoded)
        .map(|(t, d)| t.hamming_distance(d))
        .sum();
    Ok(wrong as f64 / (truth.len() * crate::codec::MESSAGE_BITS) as f64)
}

/// Fraction of strings whose post-ECC payload is not the truth.
pub fn ser(truth: &[Payload], decoded: &[DecodeResult]) -> Result<f64> {
    if truth.len() != decoded.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: decoded.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = truth
        .iter()
        .zip(decoded)
        .filter(|(t, d)| !d.is_ok() || d.payload != **t)
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}
