//! Building blocks for watermarking Bayer RAW images: the RAW and RGB image
//! types, 16-bit PNG storage, the BCH payload codec, a classical
//! (non-learned) ISP, dataset manifests and the quality/robustness metrics.
//!
//! Everything in this crate is plain Rust and free of any tensor runtime; the
//! learned networks live in `rawmark-nn`.

pub mod classical_isp;
pub mod codec;
pub mod dataset;
mod error;
pub mod jpeg;
pub mod metrics;
pub mod pngio;
pub mod raw;
pub mod synthetic;

pub use error::{Error, Result};
pub use raw::{BayerPattern, BayerRaw, DemosaicedRaw, PackedBayer, RgbImage};
