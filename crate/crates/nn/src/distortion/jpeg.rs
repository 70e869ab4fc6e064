//! Differentiable JPEG: full-range YCbCr, 8x8 orthonormal DCT, IJG-scaled
//! Annex K tables, no chroma subsampling. The rounding of quantised
//! coefficients is replaced by `x^3` for `|x| < 0.5` and the identity
//! elsewhere, which is discontinuous at `|x| = 0.5`.

use rawmark_core::jpeg::{scaled_table, CHROMA_QTABLE, LUMA_QTABLE};
use tch::{Kind, Tensor};

use crate::{Error, Result};

pub fn surrogate_round(x: &Tensor) -> Tensor {
    x.pow_tensor_scalar(3).where_self(&x.abs().lt(0.5), x)
}

/// Rows are the DCT-II basis vectors.
pub fn dct_matrix(kind: Kind) -> Tensor {
    let mut m = [0f64; 64];
    for u in 0..8 {
        let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for x in 0..8 {
            m[u * 8 + x] =
                a * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
        }
    }
    Tensor::from_slice(&m).view([8, 8]).to_kind(kind)
}

const RGB_TO_YCBCR: [f64; 9] = [
    0.299, 0.587, 0.114, //
    -0.168_736, -0.331_264, 0.5, //
    0.5, -0.418_688, -0.081_312,
];
const YCBCR_TO_RGB: [f64; 9] = [
    1.0, 0.0, 1.402, //
    1.0, -0.344_136, -0.714_136, //
    1.0, 1.772, 0.0,
];

fn mix(m: &[f64; 9], x: &Tensor) -> Tensor {
    let m = Tensor::from_slice(m).view([3, 3]).to_kind(x.kind());
    Tensor::einsum("ij,bjhw->bihw", &[m, x.shallow_clone()], None::<i64>)
}

/// `[N, 3, 1, 1, 8, 8]` quantisation steps in 0..255 units.
fn quant_tables(qualities: &[u8], kind: Kind) -> Result<Tensor> {
    let mut data = Vec::with_capacity(qualities.len() * 3 * 64);
    for &q in qualities {
        let luma = scaled_table(&LUMA_QTABLE, q)?;
        let chroma = scaled_table(&CHROMA_QTABLE, q)?;
        for table in [&luma, &chroma, &chroma] {
            data.extend(table.iter().map(|&v| f64::from(v)));
        }
    }
    Ok(Tensor::from_slice(&data)
        .view([qualities.len() as i64, 3, 1, 1, 8, 8])
        .to_kind(kind))
}

/// `x` is `[N, 3, H, W]` in `[0, 1]`, one quality per sample. Sizes that are
/// not multiples of 8 are reflect-padded and cropped back.
pub fn jpeg_differentiable(x: &Tensor, qualities: &[u8]) -> Result<Tensor> {
    let size = x.size();
    if size.len() != 4 || size[1] != 3 || size[0] as usize != qualities.len() {
        return Err(Error::Distortion(format!(
            "JPEG expects [N, 3, H, W] with N = {} qualities, got {size:?}",
            qualities.len()
        )));
    }
    let (n, h, w) = (size[0], size[2], size[3]);
    let (ph, pw) = ((8 - h % 8) % 8, (8 - w % 8) % 8);
    let padded = if ph > 0 || pw > 0 {
        x.reflection_pad2d([0, pw, 0, ph])
    } else {
        x.shallow_clone()
    };
    let (hp, wp) = (h + ph, w + pw);
    let kind = x.kind();
    let offset = Tensor::from_slice(&[128.0f64, 0.0, 0.0])
        .view([1, 3, 1, 1])
        .to_kind(kind);

    let ycc = mix(&RGB_TO_YCBCR, &(padded * 255.0)) - &offset;
    let blocks = ycc
        .reshape([n, 3, hp / 8, 8, wp / 8, 8])
        .permute([0, 1, 2, 4, 3, 5]);
    let c = dct_matrix(kind);
    let ct = c.tr();
    let coef = c.matmul(&blocks).matmul(&ct);
    let q = quant_tables(qualities, kind)?;
    let coef = surrogate_round(&(coef / &q)) * &q;
    let blocks = ct.matmul(&coef).matmul(&c);
    let ycc = blocks
        .permute([0, 1, 2, 4, 3, 5])
        .contiguous()
        .view([n, 3, hp, wp])
        + &offset;
    let rgb = mix(&YCBCR_TO_RGB, &ycc) / 255.0;
    Ok(rgb.narrow(2, 0, h).narrow(3, 0, w).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Device;

    #[test]
    fn surrogate_follows_the_piecewise_definition() {
        let x = Tensor::from_slice(&[0.4f64, 0.5, 0.7, -0.4, -0.5, 0.0, 0.499]);
        let y = Vec::<f64>::try_from(&surrogate_round(&x)).unwrap();
        // 0.4^3 is not representable; it is the nearest double to 0.064.
        assert!((y[0] - 0.064).abs() < 1e-16);
        assert!((y[3] + 0.064).abs() < 1e-16);
        assert_eq!(&y[1..3], &[0.5, 0.7]);
        assert_eq!(&y[4..6], &[-0.5, 0.0]);
        assert!((y[6] - 0.499f64.powi(3)).abs() < 1e-16);
    }

    #[test]
    fn dct_is_orthonormal() {
        let c = dct_matrix(Kind::Double);
        let eye = Tensor::eye(8, (Kind::Double, Device::Cpu));
        assert!(c.matmul(&c.tr()).allclose(&eye, 1e-12, 1e-12, false));
    }

    #[test]
    fn colour_transforms_are_inverse() {
        let a = Tensor::from_slice(&RGB_TO_YCBCR).view([3, 3]);
        let b = Tensor::from_slice(&YCBCR_TO_RGB).view([3, 3]);
        let eye = Tensor::eye(3, (Kind::Double, Device::Cpu));
        assert!(b.matmul(&a).allclose(&eye, 1e-5, 1e-5, false));
    }

    #[test]
    fn quality_100_keeps_a_constant_image() {
        let x = Tensor::full([1, 3, 16, 16], 0.37, (Kind::Double, Device::Cpu));
        let y = jpeg_differentiable(&x, &[100]).unwrap();
        assert!((y - &x).abs().max().double_value(&[]) <= 1e-3);
    }

    #[test]
    fn odd_sizes_are_padded_and_cropped() {
        let x = Tensor::rand([2, 3, 13, 10], (Kind::Float, Device::Cpu));
        let y = jpeg_differentiable(&x, &[50, 90]).unwrap();
        assert_eq!(y.size(), [2, 3, 13, 10]);
    }

    #[test]
    fn lower_quality_distorts_more() {
        tch::manual_seed(1);
        let x = Tensor::rand([1, 3, 16, 16], (Kind::Double, Device::Cpu));
        let err = |q| {
            let y = jpeg_differentiable(&x, &[q]).unwrap();
            (y - &x).abs().mean(Kind::Double).double_value(&[])
        };
        assert!(err(10) > err(95));
    }
}
