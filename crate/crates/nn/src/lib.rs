//! Networks, differentiable distortions, training and evaluation for RAW
//! domain watermarking on top of libtorch.

pub mod config;
pub mod distortion;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
