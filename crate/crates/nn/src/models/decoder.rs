use rawmark_core::codec::MESSAGE_BITS;
use tch::nn::{self, Module};
use tch::Tensor;

use super::{conv, leaky, linear};
use crate::{Error, Result};

/// `(out-channel multiplier, stride)` of the seven feature convolutions;
/// five are strided, so the input shrinks 32x.
const LAYERS: [(i64, i64); 7] = [(1, 2), (1, 1), (2, 2), (2, 1), (2, 2), (4, 2), (4, 2)];

/// Convolutional feature extractor plus a two-layer perceptron emitting 100
/// logits. Fixed input size.
#[derive(Debug)]
pub struct Decoder {
    convs: Vec<nn::Conv2D>,
    hidden: nn::Linear,
    head: nn::Linear,
    size: i64,
}

impl Decoder {
    pub fn new(p: nn::Path, width: i64, hidden: i64, size: i64) -> Result<Self> {
        if size % 32 != 0 {
            return Err(Error::Shape(format!("decoder size {size} is not a multiple of 32")));
        }
        let mut convs = Vec::with_capacity(LAYERS.len());
        let mut c = 3;
        for (i, (mult, stride)) in LAYERS.iter().enumerate() {
            convs.push(conv(&p / format!("conv{i}"), c, width * mult, 3, *stride));
            c = width * mult;
        }
        let flat = c * (size / 32) * (size / 32);
        Ok(Self {
            convs,
            hidden: linear(&p / "hidden", flat, hidden),
            head: linear(&p / "head", hidden, MESSAGE_BITS as i64),
            size,
        })
    }

    pub fn size(&self) -> i64 {
        self.size
    }

    /// `[N, 3, S, S]` to `[N, 100]` logits.
    pub fn logits(&self, rgb: &Tensor) -> Result<Tensor> {
        let size = rgb.size();
        if size.len() != 4 || size[1] != 3 || size[2] != self.size || size[3] != self.size {
            return Err(Error::Shape(format!(
                "decoder expects [N, 3, {s}, {s}], got {size:?}",
                s = self.size
            )));
        }
        let mut x = rgb - 0.5;
        for c in &self.convs {
            x = leaky(&c.forward(&x));
        }
        let x = leaky(&self.hidden.forward(&x.flatten(1, -1)));
        Ok(self.head.forward(&x))
    }

    /// Bit probabilities in `(0, 1)`.
    pub fn forward(&self, rgb: &Tensor) -> Result<Tensor> {
        Ok(self.logits(rgb)?.sigmoid())
    }
}
