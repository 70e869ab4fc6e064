//! ISP pretraining and the three-stage watermark schedule.
//!
//! Stage 1 trains encoder and decoder on the decode loss alone. Stage 2 adds
//! the image fidelity terms and the Wasserstein critic. Stage 3 keeps the
//! stage 2 objective but decodes from images passed through the distortion
//! stack, with ranges that widen over the stage's epochs.

pub mod data;
pub mod losses;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rawmark_core::codec::Message;
use serde::Serialize;
use tch::{nn, nn::OptimizerConfig, Kind, Tensor};

pub use data::PairedData;
pub use losses::{LossTerms, LossValues};

use crate::distortion::{apply_pipeline, sample_params, Schedule};
use crate::models::{save_bundle, Discriminator, ModelBundle, Networks};
use crate::tensor::messages_to_tensor;
use crate::{Error, Result};

/// One optimisation step.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub stage: u8,
    pub epoch: usize,
    pub iteration: usize,
    #[serde(flatten)]
    pub losses: LossValues,
    /// Critic objective before its update; absent in stage 1.
    pub critic_objective: Option<f64>,
    /// BER of the decoder on undistorted encoded images.
    pub clean_ber: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochSummary {
    pub stage: u8,
    pub epoch: usize,
    pub iterations: usize,
    pub decode: f64,
    pub total: f64,
    pub clean_ber: f64,
}

/// Append-only record of a run, optionally mirrored to a JSONL file.
#[derive(Debug, Default)]
pub struct Telemetry {
    records: Vec<IterationRecord>,
    isp_losses: Vec<f64>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl Telemetry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn to_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::options()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            sink: Some((path, BufWriter::new(file))),
            ..Self::default()
        })
    }

    fn write_line(&mut self, value: &impl Serialize) -> Result<()> {
        if let Some((path, w)) = &mut self.sink {
            let line = serde_json::to_string(value).expect("telemetry serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        Ok(())
    }

    pub fn push(&mut self, rec: IterationRecord) -> Result<()> {
        self.write_line(&rec)?;
        self.records.push(rec);
        Ok(())
    }

    fn push_isp(&mut self, epoch: usize, l1: f64) -> Result<()> {
        #[derive(Serialize)]
        struct IspEpoch {
            stage: &'static str,
            epoch: usize,
            l1: f64,
        }
        self.write_line(&IspEpoch { stage: "isp", epoch, l1 })?;
        self.isp_losses.push(l1);
        Ok(())
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    /// Mean training L1 per ISP pretraining epoch.
    pub fn isp_losses(&self) -> &[f64] {
        &self.isp_losses
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some((path, w)) = &mut self.sink {
            w.flush().map_err(|e| Error::io(path.as_path(), e))?;
        }
        Ok(())
    }

    /// Mean of each epoch's records for one stage.
    pub fn epoch_summaries(&self, stage: u8) -> Vec<EpochSummary> {
        let mut out: Vec<EpochSummary> = Vec::new();
        for r in self.records.iter().filter(|r| r.stage == stage) {
            if out.last().is_none_or(|s| s.epoch != r.epoch) {
                out.push(EpochSummary {
                    stage,
                    epoch: r.epoch,
                    iterations: 0,
                    decode: 0.0,
                    total: 0.0,
                    clean_ber: 0.0,
                });
            }
            let s = out.last_mut().expect("just pushed");
            s.iterations += 1;
            s.decode += r.losses.decode;
            s.total += r.losses.total;
            s.clean_ber += r.clean_ber;
        }
        for s in &mut out {
            let n = s.iterations as f64;
            s.decode /= n;
            s.total /= n;
            s.clean_ber /= n;
        }
        out
    }
}

/// Which stages to run and where to checkpoint.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub stages: Vec<u8>,
    /// Bundle path rewritten after every completed stage.
    pub checkpoint: Option<PathBuf>,
}

impl TrainOptions {
    pub fn all() -> Self {
        Self {
            stages: vec![1, 2, 3],
            checkpoint: None,
        }
    }

    pub fn stage(stage: u8) -> Self {
        Self {
            stages: vec![stage],
            checkpoint: None,
        }
    }
}

fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fit the deep ISP to the RGB renderings with an L1 loss, then freeze it.
/// Refuses bundles that already carry watermark training, since that
/// training assumed the current ISP.
pub fn pretrain_isp(
    bundle: &mut ModelBundle,
    data: &PairedData,
    telemetry: &mut Telemetry,
) -> Result<()> {
    if bundle.training_stage_completed > 0 {
        return Err(Error::Training(format!(
            "bundle already completed watermark stage {}; the ISP is frozen",
            bundle.training_stage_completed
        )));
    }
    let cfg = bundle.config.clone();
    let nets = &mut bundle.nets;
    nets.isp_vs.unfreeze();
    let mut opt = nn::Adam::default().build(&nets.isp_vs, cfg.isp_lr)?;
    let mut rng = seeded_rng(cfg.seed, 10);
    let result = (|| {
        for epoch in 0..cfg.isp_epochs {
            let batches = data.epoch(cfg.crop_size as usize, cfg.batch_size, &mut rng)?;
            let mut sum = 0.0;
            for (raw, rgb) in &batches {
                let loss = (nets.isp.forward(raw)? - rgb).abs().mean(Kind::Float);
                opt.backward_step(&loss);
                sum += loss.double_value(&[]);
            }
            telemetry.push_isp(epoch, sum / batches.len() as f64)?;
        }
        telemetry.flush()
    })();
    nets.isp_vs.freeze();
    result
}

fn bit_error_rate(logits: &Tensor, messages: &Tensor) -> f64 {
    logits
        .gt(0.0)
        .to_kind(Kind::Float)
        .ne_tensor(messages)
        .to_kind(Kind::Float)
        .mean(Kind::Float)
        .double_value(&[])
}

/// Forward pass through encoder, frozen ISP, optional distortion and decoder.
pub struct Forward {
    pub terms: LossTerms,
    /// Decoder logits on the undistorted encoded RGB.
    pub clean_logits: Tensor,
    pub encoded_rgb: Tensor,
    pub cover_rgb: Tensor,
}

/// Stage 2/3 objective terms for one batch. `distortion` carries one
/// parameter set per sample when the decoder should see distorted images.
pub fn watermark_forward(
    nets: &Networks,
    cfg: &crate::config::RunConfig,
    raw: &Tensor,
    messages: &Tensor,
    distortion: Option<(&[crate::distortion::DistortionParams], &mut ChaCha8Rng)>,
) -> Result<Forward> {
    let (encoded_raw, _) = nets.encoder.forward(raw, messages)?;
    let encoded_rgb = nets.isp.forward(&encoded_raw)?;
    let cover_rgb = tch::no_grad(|| nets.isp.forward(raw))?;
    let clean_logits = nets.decoder.logits(&encoded_rgb)?;
    let decode = match distortion {
        Some((params, rng)) => {
            let seen = apply_pipeline(&encoded_rgb, params, rng)?;
            losses::decode_loss(&nets.decoder.logits(&seen)?, messages)?
        }
        None => losses::decode_loss(&clean_logits, messages)?,
    };
    let terms = LossTerms {
        decode,
        raw_l2: losses::l2(&encoded_raw, raw)?,
        rgb_l2: losses::l2(&encoded_rgb, &cover_rgb)?,
        perceptual: losses::perceptual(cfg.perceptual_loss, &encoded_rgb, &cover_rgb)?,
        critic: -nets.critic.forward(&encoded_rgb).mean(Kind::Float),
    };
    Ok(Forward {
        terms,
        clean_logits,
        encoded_rgb,
        cover_rgb,
    })
}

fn random_messages(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let msgs: Vec<Message> = (0..n).map(|_| Message::random(rng)).collect();
    messages_to_tensor(&msgs)
}

/// `stream` selects the rng stream for crops, messages and distortion.
fn run_stage(
    bundle: &mut ModelBundle,
    stage: u8,
    stream: u64,
    data: &PairedData,
    telemetry: &mut Telemetry,
) -> Result<()> {
    let cfg = bundle.config.clone();
    let epochs = cfg.stage_epochs[usize::from(stage - 1)];
    let nets = &bundle.nets;
    let mut opt = nn::Adam::default().build(&nets.watermark_vs, cfg.lr_encdec)?;
    let mut opt_d = nn::RmsProp::default().build(&nets.critic_vs, cfg.lr_disc)?;
    let mut rng = seeded_rng(cfg.seed, stream);
    let mut iteration = 0;
    for epoch in 0..epochs {
        let batches = data.epoch(cfg.crop_size as usize, cfg.batch_size, &mut rng)?;
        let schedule = Schedule::training(epoch as u32, epochs as u32)?;
        for (raw, _) in &batches {
            let n = raw.size()[0] as usize;
            let messages = random_messages(n, &mut rng);
            let record = if stage == 1 {
                let (encoded_raw, _) = nets.encoder.forward(raw, &messages)?;
                let logits = nets.decoder.logits(&nets.isp.forward(&encoded_raw)?)?;
                let loss = losses::decode_loss(&logits, &messages)?;
                opt.backward_step(&loss);
                let v = loss.double_value(&[]);
                IterationRecord {
                    stage,
                    epoch,
                    iteration,
                    losses: LossValues {
                        decode: v,
                        raw_l2: 0.0,
                        rgb_l2: 0.0,
                        perceptual: 0.0,
                        critic: 0.0,
                        total: v,
                    },
                    critic_objective: None,
                    clean_ber: bit_error_rate(&logits, &messages),
                }
            } else {
                let params = if stage == 3 && cfg.distortion_enabled {
                    Some(
                        (0..n)
                            .map(|_| sample_params(&schedule, &mut rng))
                            .collect::<Result<Vec<_>>>()?,
                    )
                } else {
                    None
                };
                let fwd = watermark_forward(
                    nets,
                    &cfg,
                    raw,
                    &messages,
                    params.as_deref().map(|p| (p, &mut rng)),
                )?;
                // Generator first: its critic term saved the current critic
                // weights, which the critic update below modifies in place.
                let total = fwd.terms.total(&cfg.lambda);
                opt.backward_step(&total);
                let critic_obj = losses::critic_loss(
                    &nets.critic.forward(&fwd.encoded_rgb.detach()),
                    &nets.critic.forward(&fwd.cover_rgb),
                );
                opt_d.backward_step(&critic_obj);
                Discriminator::clip(&nets.critic_vs, cfg.disc_clip);
                IterationRecord {
                    stage,
                    epoch,
                    iteration,
                    losses: fwd.terms.values(&cfg.lambda),
                    critic_objective: Some(critic_obj.double_value(&[])),
                    clean_ber: bit_error_rate(&fwd.clean_logits, &messages),
                }
            };
            telemetry.push(record)?;
            iteration += 1;
        }
        telemetry.flush()?;
    }
    Ok(())
}

/// Run the requested stages in order. A stage may run once every earlier
/// stage has completed; rerunning a completed stage continues from the
/// current weights.
pub fn train(
    bundle: &mut ModelBundle,
    data: &PairedData,
    opts: &TrainOptions,
    telemetry: &mut Telemetry,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    let mut stages = opts.stages.clone();
    stages.sort_unstable();
    stages.dedup();
    for stage in stages {
        if !(1..=3).contains(&stage) {
            return Err(Error::Training(format!("no stage {stage}; stages are 1, 2 and 3")));
        }
        if stage > bundle.training_stage_completed + 1 {
            return Err(Error::Training(format!(
                "stage {stage} needs stage {} first (bundle has completed {})",
                stage - 1,
                bundle.training_stage_completed
            )));
        }
        run_stage(bundle, stage, u64::from(stage), data, telemetry)?;
        bundle.training_stage_completed = bundle.training_stage_completed.max(stage);
        if let Some(path) = &opts.checkpoint {
            save_bundle(bundle, path)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::distortion::DistortionParams;
    use rawmark_core::{BayerRaw, RgbImage};

    fn tiny_config() -> RunConfig {
        RunConfig::from_toml_str(
            r#"
            crop_size = 32
            batch_size = 2
            stage_epochs = [1, 1, 2]
            encoder = { base_channels = 4, depth = 2 }
            decoder = { width = 4, hidden = 16 }
            disc = { base_channels = 2 }
            isp = { base_channels = 4, depth = 2, epochs = 2 }
            "#,
        )
        .unwrap()
    }

    fn tiny_data(n: usize) -> PairedData {
        let mut raws = Vec::new();
        let mut rgbs = Vec::new();
        for k in 0..n {
            let v: Vec<f32> = (0..32 * 32)
                .map(|i| {
                    let (y, x) = ((i / 32) as f32, (i % 32) as f32);
                    0.5 + 0.3 * (x / (4.0 + k as f32)).sin() * (y / 6.0).cos()
                })
                .collect();
            raws.push(BayerRaw::new(v.clone(), 32, 32).unwrap());
            rgbs.push(RgbImage::new(v.iter().flat_map(|&x| [x.sqrt(); 3]).collect(), 32, 32).unwrap());
        }
        PairedData::new(raws, rgbs).unwrap()
    }

    fn pretrained(cfg: RunConfig, data: &PairedData) -> ModelBundle {
        let mut bundle = ModelBundle::new(cfg).unwrap();
        pretrain_isp(&mut bundle, data, &mut Telemetry::new()).unwrap();
        bundle
    }

    #[test]
    fn isp_pretraining_memorises_one_pair() {
        let mut cfg = tiny_config();
        cfg.isp_epochs = 150;
        cfg.batch_size = 1;
        let mut bundle = ModelBundle::new(cfg).unwrap();
        let mut tel = Telemetry::new();
        pretrain_isp(&mut bundle, &tiny_data(1), &mut tel).unwrap();
        let l = tel.isp_losses();
        assert!(*l.last().unwrap() <= 0.02, "final L1 {}", l.last().unwrap());
        let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let windows: Vec<f64> = l.windows(10).map(avg).collect();
        assert!(windows.last().unwrap() < windows.first().unwrap());
        assert!(bundle.nets.isp_vs.trainable_variables().iter().all(|v| !v.requires_grad()));
    }

    #[test]
    fn watermark_training_keeps_the_isp_frozen() {
        let mut bundle = ModelBundle::new(tiny_config()).unwrap();
        let data = tiny_data(4);
        let mut tel = Telemetry::new();
        pretrain_isp(&mut bundle, &data, &mut tel).unwrap();
        let before = bundle.isp_hash().unwrap();
        train(&mut bundle, &data, &TrainOptions::all(), &mut tel).unwrap();
        assert_eq!(bundle.isp_hash().unwrap(), before);
        assert_eq!(bundle.training_stage_completed, 3);
        assert!(pretrain_isp(&mut bundle, &data, &mut tel).is_err());
        let stages: Vec<u8> = tel.records().iter().map(|r| r.stage).collect();
        assert_eq!(stages.iter().filter(|&&s| s == 3).count(), 4);
    }

    #[test]
    fn stages_must_run_in_order() {
        let mut bundle = ModelBundle::new(tiny_config()).unwrap();
        let data = tiny_data(2);
        let err = train(&mut bundle, &data, &TrainOptions::stage(2), &mut Telemetry::new());
        assert!(err.is_err());
        assert!(train(&mut bundle, &data, &TrainOptions::stage(4), &mut Telemetry::new()).is_err());
    }

    #[test]
    fn telemetry_replays_with_the_same_seed() {
        let run = || {
            let mut bundle = ModelBundle::new(tiny_config()).unwrap();
            let mut tel = Telemetry::new();
            train(&mut bundle, &tiny_data(4), &TrainOptions::all(), &mut tel).unwrap();
            tel.records().to_vec()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.losses.total - y.losses.total).abs() <= 1e-6);
            assert!((x.losses.decode - y.losses.decode).abs() <= 1e-6);
        }
    }

    #[test]
    fn stage_three_without_distortion_matches_stage_two() {
        // Same weights and rng stream: the stage 3 loop with distortion off
        // performs exactly the stage 2 updates.
        let mut cfg = tiny_config();
        cfg.distortion_enabled = false;
        cfg.stage_epochs = [1, 2, 2];
        let data = tiny_data(4);
        let mut a = ModelBundle::new(cfg.clone()).unwrap();
        train(&mut a, &data, &TrainOptions::stage(1), &mut Telemetry::new()).unwrap();
        let mut b = ModelBundle::new(cfg).unwrap();
        b.nets.copy_group_from("watermark", &a.nets).unwrap();
        b.training_stage_completed = 2;

        let mut t2 = Telemetry::new();
        let mut t3 = Telemetry::new();
        run_stage(&mut a, 2, 7, &data, &mut t2).unwrap();
        run_stage(&mut b, 3, 7, &data, &mut t3).unwrap();
        let (r2, r3) = (t2.records(), t3.records());
        assert_eq!(r2.len(), r3.len());
        for (x, y) in r2.iter().zip(r3) {
            assert!((x.losses.total - y.losses.total).abs() <= 1e-6);
        }
    }

    #[test]
    fn identity_distortion_leaves_the_loss_unchanged() {
        let data = tiny_data(2);
        let mut bundle = pretrained(tiny_config(), &data);
        train(&mut bundle, &data, &TrainOptions::stage(1), &mut Telemetry::new()).unwrap();
        let (raw, _) = &data.epoch(32, 2, &mut seeded_rng(0, 0)).unwrap()[0];
        let m = random_messages(2, &mut seeded_rng(0, 1));
        let cfg = &bundle.config;
        let plain = watermark_forward(&bundle.nets, cfg, raw, &m, None).unwrap();
        let ident = [DistortionParams::identity(); 2];
        let mut rng = seeded_rng(0, 2);
        let dist = watermark_forward(&bundle.nets, cfg, raw, &m, Some((&ident, &mut rng))).unwrap();
        let (a, b) = (plain.terms.values(&cfg.lambda), dist.terms.values(&cfg.lambda));
        // Quality 100 JPEG is not exactly lossless, so allow a small gap.
        assert!((a.decode - b.decode).abs() < 1e-3, "{a:?} {b:?}");
        assert_eq!(a.rgb_l2, b.rgb_l2);
    }

    #[test]
    fn untrained_decoder_sees_chance_through_distortion() {
        let data = tiny_data(2);
        let bundle = pretrained(tiny_config(), &data);
        let (raw, _) = &data.epoch(32, 2, &mut seeded_rng(0, 0)).unwrap()[0];
        let m = random_messages(2, &mut seeded_rng(0, 1));
        let s = Schedule::training(0, 1).unwrap();
        let mut rng = seeded_rng(0, 2);
        let p: Vec<_> = (0..2).map(|_| sample_params(&s, &mut rng).unwrap()).collect();
        let f = watermark_forward(&bundle.nets, &bundle.config, raw, &m, Some((&p, &mut rng))).unwrap();
        let l = f.terms.decode.double_value(&[]);
        assert!((l - std::f64::consts::LN_2).abs() < 0.05, "{l}");
    }

    #[test]
    fn encoder_gradient_flows_through_the_distortion_stack() {
        let data = tiny_data(2);
        let mut bundle = pretrained(tiny_config(), &data);
        // One stage-1 run gives the decoder and encoder non-trivial weights.
        train(&mut bundle, &data, &TrainOptions::stage(1), &mut Telemetry::new()).unwrap();
        let (raw, _) = &data.epoch(32, 2, &mut seeded_rng(0, 0)).unwrap()[0];
        let m = random_messages(2, &mut seeded_rng(0, 1));
        let p = [DistortionParams {
            kelvin: 4000.0,
            jpeg_quality: 50,
            brightness: 0.1,
            contrast: 0.1,
            saturation: 0.1,
            sigma: 0.02,
        }; 2];
        let mut rng = seeded_rng(0, 2);
        let f = watermark_forward(&bundle.nets, &bundle.config, raw, &m, Some((&p, &mut rng))).unwrap();
        let encoder_vars: Vec<Tensor> = bundle
            .nets
            .watermark_vs
            .variables()
            .into_iter()
            .filter(|(name, _)| name.starts_with("encoder"))
            .map(|(_, v)| v)
            .collect();
        let grads = Tensor::run_backward(&[&f.terms.decode], &encoder_vars, false, false);
        let grad_norm: f64 = grads
            .iter()
            .map(|g| g.abs().sum(Kind::Double).double_value(&[]))
            .sum();
        assert!(grad_norm > 0.0);
    }
}
