use tch::nn;
use tch::Tensor;

use super::UNet;
use crate::tensor::pack;
use crate::{Error, Result};

/// Learned RAW-to-RGB pipeline: a U-Net on the packed `H/2 x W/2 x 4`
/// planes predicts 12 channels that a pixel shuffle turns into full
/// resolution RGB, clamped to `[0, 1]`. The output layer starts at a flat
/// mid-gray so the clamp passes gradients from the first step.
#[derive(Debug)]
pub struct DeepIsp {
    net: UNet,
}

impl DeepIsp {
    pub fn new(p: nn::Path, base: i64, depth: usize) -> Self {
        Self {
            net: UNet::new(p, 4, 12, base, depth, 0.5),
        }
    }

    /// `[N, 1, H, W]` mosaic to `[N, 3, H, W]`.
    pub fn forward(&self, raw: &Tensor) -> Result<Tensor> {
        let size = raw.size();
        if size.len() != 4 || size[1] != 1 || size[2] % 2 != 0 || size[3] % 2 != 0 {
            return Err(Error::Shape(format!(
                "ISP expects [N, 1, H, W] with even H, W, got {size:?}"
            )));
        }
        Ok(self.net.forward(&pack(raw)).pixel_shuffle(2).clamp(0.0, 1.0))
    }
}
