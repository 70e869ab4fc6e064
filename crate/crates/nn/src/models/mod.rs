//! Network definitions. Every convolution is He-initialised for LeakyReLU(0.2)
//! with zero bias; layers whose output must start at a known value (the
//! encoder residual, the ISP output) are zero-initialised instead.

mod bundle;
mod decoder;
mod discriminator;
mod encoder;
mod isp;
mod unet;

use serde::{Deserialize, Serialize};
use tch::nn::{self, Init};
use tch::Tensor;

pub use bundle::{isp_hash, load_bundle, save_bundle, ModelBundle, Networks, SCHEMA_VERSION};
pub use decoder::Decoder;
pub use discriminator::Discriminator;
pub use encoder::{Encoder, EncoderConfig};
pub use isp::DeepIsp;
pub use unet::UNet;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    RawOnly,
    DemosaicOnly,
    Combined,
}

pub(crate) fn leaky(x: &Tensor) -> Tensor {
    x.maximum(&(x * LEAKY_SLOPE))
}

pub(crate) fn he_init() -> Init {
    Init::Kaiming {
        dist: nn::init::NormalOrUniform::Normal,
        fan: nn::init::FanInOut::FanIn,
        non_linearity: nn::init::NonLinearity::ExplicitGain(
            (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt(),
        ),
    }
}

/// `k x k` convolution with "same" padding.
pub(crate) fn conv(p: nn::Path, cin: i64, cout: i64, k: i64, stride: i64) -> nn::Conv2D {
    nn::conv2d(
        p,
        cin,
        cout,
        k,
        nn::ConvConfig {
            stride,
            padding: k / 2,
            ws_init: he_init(),
            bs_init: Init::Const(0.0),
            ..Default::default()
        },
    )
}

pub(crate) fn zero_conv(p: nn::Path, cin: i64, cout: i64, bias: f64) -> nn::Conv2D {
    nn::conv2d(
        p,
        cin,
        cout,
        1,
        nn::ConvConfig {
            ws_init: Init::Const(0.0),
            bs_init: Init::Const(bias),
            ..Default::default()
        },
    )
}

pub(crate) fn linear(p: nn::Path, cin: i64, cout: i64) -> nn::Linear {
    nn::linear(
        p,
        cin,
        cout,
        nn::LinearConfig {
            ws_init: he_init(),
            bs_init: Some(Init::Const(0.0)),
            bias: true,
        },
    )
}
