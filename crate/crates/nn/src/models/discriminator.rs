use tch::nn::{self, Module};
use tch::Tensor;

use super::{conv, leaky};

/// Wasserstein critic: four strided convolutions, a one-channel projection
/// and global max pooling to an unbounded score per image.
#[derive(Debug)]
pub struct Discriminator {
    convs: Vec<nn::Conv2D>,
    out: nn::Conv2D,
}

impl Discriminator {
    pub fn new(p: nn::Path, base: i64) -> Self {
        let widths = [base, 2 * base, 4 * base, 8 * base];
        let mut convs = Vec::with_capacity(widths.len());
        let mut c = 3;
        for (i, w) in widths.into_iter().enumerate() {
            convs.push(conv(&p / format!("conv{i}"), c, w, 3, 2));
            c = w;
        }
        Self {
            convs,
            out: conv(&p / "out", c, 1, 3, 1),
        }
    }

    /// `[N, 3, H, W]` to `[N]` scores.
    pub fn forward(&self, rgb: &Tensor) -> Tensor {
        let mut x = rgb - 0.5;
        for c in &self.convs {
            x = leaky(&c.forward(&x));
        }
        self.out.forward(&x).amax([1, 2, 3], false)
    }

    /// Clamp every weight and bias into `[-c, c]`.
    pub fn clip(vs: &nn::VarStore, c: f64) {
        tch::no_grad(|| {
            for mut v in vs.trainable_variables() {
                let _ = v.clamp_(-c, c);
            }
        });
    }
}
