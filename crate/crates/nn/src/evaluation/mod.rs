//! Embedding and extraction through a trained bundle, the cross-ISP report
//! and the robustness sweep.

mod plot;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rawmark_core::classical_isp::develop;
use rawmark_core::dataset::{DatasetManifest, Split};
use rawmark_core::jpeg::jpeg_round_trip;
use rawmark_core::codec::{BchCode, CodecParams, DecodeResult, DecodeStatus, Message, Payload};
use rawmark_core::metrics::{ber, psnr, ser, ssim};
use rawmark_core::{BayerRaw, RgbImage};
use serde::{Serialize, Serializer};
use tch::Tensor;

pub use sweep::{read_sweep_csv, robustness_sweep, write_sweep, SweepResult, SweepRow};

use crate::config::{RunConfig, WbMode};
use crate::models::ModelBundle;
use crate::tensor::{messages_to_tensor, raws_to_tensor, rgbs_to_tensor, tensor_to_raws, tensor_to_rgbs};
use crate::{Error, Result};

/// The payload evaluated on image `index`, independent of every other image.
pub fn payload_for(seed: u64, index: usize) -> Payload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut bytes = [0u8; 7];
    rand::Rng::fill(&mut rng, &mut bytes);
    Payload::from_bytes(bytes)
}

/// The codec this build implements; bundles recorded with other parameters
/// are refused.
pub fn codec_for(bundle: &ModelBundle) -> Result<BchCode> {
    bundle.check_codec(&CodecParams::default())?;
    Ok(BchCode::new(bundle.codec)?)
}

fn check_size(bundle: &ModelBundle, h: usize, w: usize, what: &str) -> Result<()> {
    let s = bundle.config.crop_size as usize;
    if (h, w) != (s, s) {
        return Err(Error::Shape(format!(
            "{what} is {h}x{w} but the bundle was trained on {s}x{s} images"
        )));
    }
    Ok(())
}

fn in_batches<T, U>(
    items: &[T],
    batch: usize,
    mut f: impl FnMut(&[T]) -> Result<Vec<U>>,
) -> Result<Vec<U>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch.max(1)) {
        out.extend(f(chunk)?);
    }
    Ok(out)
}

/// Encode one codeword per mosaic into the mosaics.
pub fn embed_messages(bundle: &ModelBundle, raws: &[BayerRaw], messages: &[Message]) -> Result<Vec<BayerRaw>> {
    if raws.len() != messages.len() {
        return Err(Error::Shape(format!(
            "{} images but {} messages",
            raws.len(),
            messages.len()
        )));
    }
    for r in raws {
        check_size(bundle, r.height(), r.width(), "RAW input")?;
    }
    let pairs: Vec<(&BayerRaw, &Message)> = raws.iter().zip(messages).collect();
    tch::no_grad(|| {
        in_batches(&pairs, bundle.config.batch_size, |chunk| {
            let r: Vec<&BayerRaw> = chunk.iter().map(|p| p.0).collect();
            let m: Vec<Message> = chunk.iter().map(|p| *p.1).collect();
            let (encoded, _) = bundle
                .nets
                .encoder
                .forward(&raws_to_tensor(&r)?, &messages_to_tensor(&m))?;
            tensor_to_raws(&encoded)
        })
    })
}

/// ECC-encode each payload and embed it.
pub fn embed(bundle: &ModelBundle, raws: &[BayerRaw], payloads: &[Payload]) -> Result<Vec<BayerRaw>> {
    let code = codec_for(bundle)?;
    let messages: Vec<Message> = payloads.iter().map(|p| code.encode(p)).collect();
    embed_messages(bundle, raws, &messages)
}

/// The bundle's frozen deep ISP.
pub fn develop_deep(bundle: &ModelBundle, raws: &[BayerRaw]) -> Result<Vec<RgbImage>> {
    tch::no_grad(|| {
        in_batches(raws, bundle.config.batch_size, |chunk| {
            let r: Vec<&BayerRaw> = chunk.iter().collect();
            tensor_to_rgbs(&bundle.nets.isp.forward(&raws_to_tensor(&r)?)?)
        })
    })
}

/// Hard decisions of the decoder for `[N, 3, S, S]` images.
pub fn decode_tensor(bundle: &ModelBundle, rgb: &Tensor) -> Result<Vec<Message>> {
    tch::no_grad(|| {
        let logits = bundle.nets.decoder.logits(rgb)?;
        let bits: Vec<u8> = Vec::<f32>::try_from(
            &logits.gt(0.0).to_kind(tch::Kind::Float).contiguous().view([-1]),
        )?
        .into_iter()
        .map(|b| b as u8)
        .collect();
        bits.chunks_exact(rawmark_core::codec::MESSAGE_BITS)
            .map(|c| Ok(Message::from_bits(c)?))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extraction {
    pub message: Message,
    pub decoded: DecodeResult,
}

pub fn extract(bundle: &ModelBundle, rgbs: &[RgbImage]) -> Result<Vec<Extraction>> {
    let code = codec_for(bundle)?;
    for img in rgbs {
        check_size(bundle, img.height(), img.width(), "RGB input")?;
    }
    let messages = in_batches(rgbs, bundle.config.batch_size, |chunk| {
        let r: Vec<&RgbImage> = chunk.iter().collect();
        decode_tensor(bundle, &rgbs_to_tensor(&r)?)
    })?;
    Ok(messages
        .into_iter()
        .map(|message| Extraction {
            message,
            decoded: code.decode(&message),
        })
        .collect())
}

/// Which ISP renders the RAW for extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IspChoice {
    Deep,
    Classical(WbMode),
}

impl IspChoice {
    pub const CROSS_ISP_DEFAULT: [IspChoice; 3] = [
        IspChoice::Deep,
        IspChoice::Classical(WbMode::Auto),
        IspChoice::Classical(WbMode::Daylight),
    ];

    /// Render with this ISP, then store as JPEG at `config.jpeg_quality` when
    /// that is set.
    pub fn develop(&self, bundle: &ModelBundle, raws: &[BayerRaw]) -> Result<Vec<RgbImage>> {
        let rgbs = match *self {
            IspChoice::Deep => develop_deep(bundle, raws)?,
            IspChoice::Classical(mode) => develop_classical(&bundle.config, mode, raws)?,
        };
        match bundle.config.jpeg_quality {
            Some(q) => rgbs.iter().map(|img| Ok(jpeg_round_trip(img, q)?)).collect(),
            None => Ok(rgbs),
        }
    }
}

pub fn develop_classical(config: &RunConfig, mode: WbMode, raws: &[BayerRaw]) -> Result<Vec<RgbImage>> {
    let wb = config.white_balance(mode);
    raws.iter().map(|r| Ok(develop(r, wb, None)?)).collect()
}

impl fmt::Display for IspChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IspChoice::Deep => f.write_str("deep"),
            IspChoice::Classical(WbMode::Auto) => f.write_str("classical:auto"),
            IspChoice::Classical(WbMode::Daylight) => f.write_str("classical:daylight"),
            IspChoice::Classical(WbMode::Camera) => f.write_str("classical:camera"),
        }
    }
}

impl FromStr for IspChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "deep" => IspChoice::Deep,
            "classical:auto" => IspChoice::Classical(WbMode::Auto),
            "classical:daylight" => IspChoice::Classical(WbMode::Daylight),
            "classical:camera" => IspChoice::Classical(WbMode::Camera),
            other => {
                return Err(Error::ConfigValue {
                    key: "isp".into(),
                    reason: format!(
                        "`{other}` is not one of deep, classical:auto, classical:daylight, classical:camera"
                    ),
                })
            }
        })
    }
}

impl Serialize for IspChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `+inf` is written as the string `"inf"`.
fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// Quality and decoding accuracy of one ISP over an image set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub isp: IspChoice,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr_raw: f64,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr_rgb: f64,
    pub ssim_rgb: f64,
    pub ber: f64,
    pub ser: f64,
    pub n_images: usize,
    pub n_strings: usize,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossIspReport {
    pub config_fingerprint: String,
    pub seed: u64,
    pub training_stage_completed: u8,
    pub reports: Vec<MetricsReport>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Round-trip through 8-bit storage, as a saved RGB file would.
fn quantize(img: &RgbImage) -> Result<RgbImage> {
    Ok(RgbImage::from_u8(&img.to_u8(), img.height(), img.width())?)
}

/// Embed the seeded payloads, render through each ISP, extract, and score
/// against the same ISP's rendering of the unmarked cover.
pub fn cross_isp_eval(
    bundle: &ModelBundle,
    covers: &[BayerRaw],
    isps: &[IspChoice],
    seed: u64,
) -> Result<CrossIspReport> {
    if covers.is_empty() {
        return Err(Error::Shape("no evaluation images".into()));
    }
    let fingerprint = bundle.config.fingerprint();
    let code = codec_for(bundle)?;
    let payloads: Vec<Payload> = (0..covers.len()).map(|i| payload_for(seed, i)).collect();
    let messages: Vec<Message> = payloads.iter().map(|p| code.encode(p)).collect();
    let encoded = embed_messages(bundle, covers, &messages)?;
    let psnr_raw = mean(
        &covers
            .iter()
            .zip(&encoded)
            .map(|(c, e)| psnr(c, e))
            .collect::<rawmark_core::Result<Vec<_>>>()?,
    );
    let mut reports = Vec::with_capacity(isps.len());
    for isp in isps {
        let cover_rgb = isp.develop(bundle, covers)?;
        let marked_rgb: Vec<RgbImage> = isp
            .develop(bundle, &encoded)?
            .iter()
            .map(quantize)
            .collect::<Result<_>>()?;
        let mut psnrs = Vec::with_capacity(covers.len());
        let mut ssims = Vec::with_capacity(covers.len());
        for (c, m) in cover_rgb.iter().zip(&marked_rgb) {
            psnrs.push(psnr(c, m)?);
            ssims.push(ssim(c, m)?);
        }
        let extracted = extract(bundle, &marked_rgb)?;
        let decoded_msgs: Vec<Message> = extracted.iter().map(|x| x.message).collect();
        let decoded: Vec<DecodeResult> = extracted.iter().map(|x| x.decoded).collect();
        reports.push(MetricsReport {
            isp: *isp,
            psnr_raw,
            psnr_rgb: mean(&psnrs),
            ssim_rgb: mean(&ssims),
            ber: ber(&messages, &decoded_msgs)?,
            ser: ser(&payloads, &decoded)?,
            n_images: covers.len(),
            n_strings: covers.len(),
            config_fingerprint: fingerprint.clone(),
        });
    }
    Ok(CrossIspReport {
        config_fingerprint: fingerprint,
        seed,
        training_stage_completed: bundle.training_stage_completed,
        reports,
    })
}

/// Bayer-aligned centre crops of the split's mosaics at the bundle's size,
/// in manifest order; `limit` 0 keeps them all.
pub fn load_covers(manifest: &DatasetManifest, split: Split, crop: usize, limit: usize) -> Result<Vec<BayerRaw>> {
    let entries = manifest.split(split);
    let take = if limit == 0 { entries.len() } else { limit.min(entries.len()) };
    let mut out = Vec::with_capacity(take);
    for entry in &entries[..take] {
        let raw = manifest.load_raw(entry)?;
        if raw.height() < crop || raw.width() < crop {
            return Err(Error::Shape(format!(
                "{}: {}x{} is smaller than the {crop} crop",
                entry.raw_path.display(),
                raw.height(),
                raw.width()
            )));
        }
        let top = (raw.height() - crop) / 4 * 2;
        let left = (raw.width() - crop) / 4 * 2;
        out.push(raw.crop(top, left, crop, crop)?);
    }
    Ok(out)
}

/// Whether a decode produced the expected payload.
pub fn recovered(result: &DecodeResult, truth: &Payload) -> bool {
    result.status == DecodeStatus::Ok && &result.payload == truth
}
