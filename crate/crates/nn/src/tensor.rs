//! Conversions between the plain image types and NCHW tensors, and the Bayer
//! transforms expressed as tensor ops.

use rawmark_core::codec::{Message, MESSAGE_BITS};
use rawmark_core::{BayerRaw, RgbImage};
use tch::{Device, Kind, Tensor};

use crate::{Error, Result};

/// `[N, 1, H, W]` from equally sized mosaics.
pub fn raws_to_tensor(raws: &[&BayerRaw]) -> Result<Tensor> {
    let first = raws
        .first()
        .ok_or_else(|| Error::Shape("empty RAW batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(raws.len() * h * w);
    for r in raws {
        if (r.height(), r.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "RAW batch mixes {h}x{w} and {}x{}",
                r.height(),
                r.width()
            )));
        }
        data.extend_from_slice(r.data());
    }
    Ok(Tensor::from_slice(&data).view([raws.len() as i64, 1, h as i64, w as i64]))
}

/// `[N, 3, H, W]` from equally sized HWC images.
pub fn rgbs_to_tensor(imgs: &[&RgbImage]) -> Result<Tensor> {
    let first = imgs
        .first()
        .ok_or_else(|| Error::Shape("empty RGB batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(imgs.len() * h * w * 3);
    for img in imgs {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "RGB batch mixes {h}x{w} and {}x{}",
                img.height(),
                img.width()
            )));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::from_slice(&data)
        .view([imgs.len() as i64, h as i64, w as i64, 3])
        .permute([0, 3, 1, 2])
        .contiguous())
}

fn to_f32_vec(t: &Tensor) -> Result<Vec<f32>> {
    let flat = t
        .to_device(Device::Cpu)
        .to_kind(Kind::Float)
        .contiguous()
        .view([-1]);
    Ok(Vec::<f32>::try_from(&flat)?)
}

/// Split `[N, 1, H, W]` into mosaics, clamping to `[0, 1]`.
pub fn tensor_to_raws(t: &Tensor) -> Result<Vec<BayerRaw>> {
    let size = t.size();
    if size.len() != 4 || size[1] != 1 {
        return Err(Error::Shape(format!("expected [N, 1, H, W], got {size:?}")));
    }
    let (h, w) = (size[2] as usize, size[3] as usize);
    let data = to_f32_vec(t)?;
    data.chunks_exact(h * w)
        .map(|c| Ok(BayerRaw::from_unclamped(c.to_vec(), h, w)?))
        .collect()
}

/// Split `[N, 3, H, W]` into HWC images, clamping to `[0, 1]`.
pub fn tensor_to_rgbs(t: &Tensor) -> Result<Vec<RgbImage>> {
    let size = t.size();
    if size.len() != 4 || size[1] != 3 {
        return Err(Error::Shape(format!("expected [N, 3, H, W], got {size:?}")));
    }
    let (h, w) = (size[2] as usize, size[3] as usize);
    let data = to_f32_vec(&t.permute([0, 2, 3, 1]))?;
    data.chunks_exact(h * w * 3)
        .map(|c| Ok(RgbImage::from_unclamped(c.to_vec(), h, w)?))
        .collect()
}

/// `[N, 100]` of 0/1 floats.
pub fn messages_to_tensor(msgs: &[Message]) -> Tensor {
    let data: Vec<f32> = msgs
        .iter()
        .flat_map(|m| m.bits().iter().map(|&b| f32::from(b)))
        .collect();
    Tensor::from_slice(&data).view([msgs.len() as i64, MESSAGE_BITS as i64])
}

/// Per-row probabilities of `[N, 100]`.
pub fn tensor_to_probabilities(t: &Tensor) -> Result<Vec<Vec<f32>>> {
    let size = t.size();
    if size.len() != 2 || size[1] != MESSAGE_BITS as i64 {
        return Err(Error::Shape(format!("expected [N, 100], got {size:?}")));
    }
    Ok(to_f32_vec(t)?
        .chunks_exact(MESSAGE_BITS)
        .map(<[f32]>::to_vec)
        .collect())
}

/// `[N, 1, H, W]` mosaic to `[N, 4, H/2, W/2]` in R, Gr, Gb, B order.
pub fn pack(raw: &Tensor) -> Tensor {
    let site = |dy: i64, dx: i64| {
        raw.slice(2, dy, None, 2).slice(3, dx, None, 2)
    };
    Tensor::cat(&[site(0, 0), site(0, 1), site(1, 0), site(1, 1)], 1)
}

/// Nearest-neighbour 2x upsampling of the packed planes, `[N, 4, H, W]`.
pub fn demosaic_upsample(raw: &Tensor) -> Tensor {
    let p = pack(raw);
    let (h, w) = (p.size()[2], p.size()[3]);
    p.upsample_nearest2d([2 * h, 2 * w], None, None)
}
