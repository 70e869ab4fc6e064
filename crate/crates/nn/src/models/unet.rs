use tch::nn::{self, Module};
use tch::Tensor;

use super::{conv, leaky, zero_conv};

/// Two 3x3 convolutions, each followed by LeakyReLU.
#[derive(Debug)]
struct DoubleConv {
    a: nn::Conv2D,
    b: nn::Conv2D,
}

impl DoubleConv {
    fn new(p: nn::Path, cin: i64, cout: i64) -> Self {
        Self {
            a: conv(&p / "a", cin, cout, 3, 1),
            b: conv(&p / "b", cout, cout, 3, 1),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        leaky(&self.b.forward(&leaky(&self.a.forward(x))))
    }
}

/// Image-to-image U-Net: `depth` resolution levels with `base * 2^d`
/// channels, average-pool downsampling, nearest upsampling, concatenated
/// skips and a zero-initialised 1x1 output projection.
#[derive(Debug)]
pub struct UNet {
    down: Vec<DoubleConv>,
    up: Vec<DoubleConv>,
    out: nn::Conv2D,
}

impl UNet {
    pub fn new(p: nn::Path, cin: i64, cout: i64, base: i64, depth: usize, out_bias: f64) -> Self {
        let mut down = Vec::with_capacity(depth);
        let mut c = cin;
        for d in 0..depth {
            let co = base << d;
            down.push(DoubleConv::new(&p / format!("down{d}"), c, co));
            c = co;
        }
        let mut up = Vec::with_capacity(depth.saturating_sub(1));
        for d in (0..depth.saturating_sub(1)).rev() {
            let co = base << d;
            up.push(DoubleConv::new(&p / format!("up{d}"), c + co, co));
            c = co;
        }
        let out = zero_conv(&p / "out", c, cout, out_bias);
        Self { down, up, out }
    }

    /// Spatial size must be divisible by `2^(depth - 1)`.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut skips = Vec::with_capacity(self.down.len());
        let mut x = x.shallow_clone();
        for (i, block) in self.down.iter().enumerate() {
            if i > 0 {
                x = x.avg_pool2d([2, 2], [2, 2], [0, 0], false, true, None::<i64>);
            }
            x = block.forward(&x);
            skips.push(x.shallow_clone());
        }
        skips.pop();
        for block in &self.up {
            let skip = skips.pop().expect("one skip per up block");
            let (h, w) = (skip.size()[2], skip.size()[3]);
            let upsampled = x.upsample_nearest2d([h, w], None, None);
            x = block.forward(&Tensor::cat(&[upsampled, skip], 1));
        }
        self.out.forward(&x)
    }
}
