use rawmark_core::codec::MESSAGE_BITS;
use serde::{Deserialize, Serialize};
use tch::nn::{self, Init, Module};
use tch::Tensor;

use super::{EncoderVariant, UNet};
use crate::tensor::demosaic_upsample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub message_length: usize,
    pub base_channels: i64,
    pub depth: usize,
    /// Fixed training crop, `height == width`.
    pub size: i64,
}

/// Residual encoder. The message is mapped by a dense layer to an
/// `(H/4) x (W/4)` plane, upsampled 4x, and concatenated with the mosaic
/// (raw stream) and with the nearest-upsampled packed planes (demosaic
/// stream). The streams' single-channel outputs are averaged.
#[derive(Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    fc: nn::Linear,
    raw_stream: Option<UNet>,
    demosaic_stream: Option<UNet>,
}

impl Encoder {
    pub fn new(p: nn::Path, cfg: EncoderConfig) -> Result<Self> {
        if cfg.size % 4 != 0 || cfg.size % (1 << (cfg.depth - 1)) != 0 {
            return Err(Error::Shape(format!(
                "encoder size {} must be divisible by 4 and by 2^(depth-1)",
                cfg.size
            )));
        }
        if cfg.message_length != MESSAGE_BITS {
            return Err(Error::Shape(format!(
                "message length {} is not {MESSAGE_BITS}",
                cfg.message_length
            )));
        }
        let q = cfg.size / 4;
        let bound = 1.0 / (MESSAGE_BITS as f64).sqrt();
        let fc = nn::linear(
            &p / "fc",
            MESSAGE_BITS as i64,
            q * q,
            nn::LinearConfig {
                ws_init: Init::Uniform { lo: -bound, up: bound },
                bs_init: Some(Init::Uniform { lo: -bound, up: bound }),
                bias: true,
            },
        );
        let (base, depth) = (cfg.base_channels, cfg.depth);
        let raw_stream = (cfg.variant != EncoderVariant::DemosaicOnly)
            .then(|| UNet::new(&p / "raw", 2, 1, base, depth, 0.0));
        let demosaic_stream = (cfg.variant != EncoderVariant::RawOnly)
            .then(|| UNet::new(&p / "demosaic", 5, 1, base, depth, 0.0));
        Ok(Self {
            cfg,
            fc,
            raw_stream,
            demosaic_stream,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// `[N, 100]` messages to the `[N, 1, H, W]` plane T'.
    pub fn message_preprocess(&self, messages: &Tensor) -> Tensor {
        let n = messages.size()[0];
        let (s, q) = (self.cfg.size, self.cfg.size / 4);
        self.fc
            .forward(&(messages - 0.5))
            .view([n, 1, q, q])
            .upsample_nearest2d([s, s], None, None)
    }

    /// Returns `(encoded, residual)`, both `[N, 1, H, W]`; the encoded mosaic
    /// is clamped to `[0, 1]`, the residual is not.
    pub fn forward(&self, raw: &Tensor, messages: &Tensor) -> Result<(Tensor, Tensor)> {
        let size = raw.size();
        let s = self.cfg.size;
        if size.len() != 4 || size[1] != 1 || size[2] != s || size[3] != s {
            return Err(Error::Shape(format!(
                "encoder expects [N, 1, {s}, {s}], got {size:?}"
            )));
        }
        if messages.size() != [size[0], MESSAGE_BITS as i64] {
            return Err(Error::Shape(format!(
                "messages {:?} do not match batch {}",
                messages.size(),
                size[0]
            )));
        }
        let t = self.message_preprocess(messages);
        let a = self
            .raw_stream
            .as_ref()
            .map(|net| net.forward(&Tensor::cat(&[&t, raw], 1)));
        let b = self
            .demosaic_stream
            .as_ref()
            .map(|net| net.forward(&Tensor::cat(&[t, demosaic_upsample(raw)], 1)));
        let residual = match (a, b) {
            (Some(a), Some(b)) => (a + b) * 0.5,
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("every variant has a stream"),
        };
        let encoded = (raw + &residual).clamp(0.0, 1.0);
        Ok((encoded, residual))
    }
}
