use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rawmark_core::codec::{DecodeStatus, Payload};
use rawmark_core::dataset::{
    generate_synthetic, ingest_dataset, DatasetManifest, Layout, Split, SyntheticOptions,
};
use rawmark_core::jpeg::jpeg_round_trip;
use rawmark_core::pngio::{load_any_rgb, load_raw_png, save_raw_png, save_rgb_png};
use rawmark_core::synthetic::write_corpus;
use rawmark_nn::config::{parse_override, RunConfig, CONFIG_ENV};
use rawmark_nn::distortion::DistortionKind;
use rawmark_nn::evaluation::{
    self, cross_isp_eval, develop_classical, develop_deep, load_covers, robustness_sweep,
    write_sweep, IspChoice,
};
use rawmark_nn::models::{load_bundle, save_bundle, ModelBundle};
use rawmark_nn::training::{self, PairedData, Telemetry, TrainOptions};

use crate::ConfigArgs;

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn code(&self) -> u8 {
        self.code
    }

    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<rawmark_nn::Error> for CliError {
    fn from(e: rawmark_nn::Error) -> Self {
        Self {
            code: if e.is_validation() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<rawmark_core::Error> for CliError {
    fn from(e: rawmark_core::Error) -> Self {
        rawmark_nn::Error::from(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Prefix an error with the input it concerns.
trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T> {
        self.map_err(|e| {
            let e = e.into();
            CliError {
                code: e.code,
                message: format!("{what}: {}", e.message),
            }
        })
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        self.overrides
            .iter()
            .map(|s| parse_override(s).context(format!("--set {s}")))
            .collect()
    }

    fn has_file(&self) -> bool {
        self.config.is_some() || std::env::var_os(CONFIG_ENV).is_some()
    }

    fn is_empty(&self) -> bool {
        !self.has_file() && self.overrides.is_empty()
    }

    fn load(&self) -> Result<RunConfig> {
        let what = self
            .config
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "config".into());
        RunConfig::load(self.config.as_deref(), &self.overrides()?).context(what)
    }

    /// A config file replaces `base`; bare overrides adjust it.
    fn load_over(&self, base: &RunConfig) -> Result<RunConfig> {
        if self.has_file() {
            self.load()
        } else {
            base.with_overrides(&self.overrides()?).context("--set")
        }
    }
}

fn open_bundle(path: &Path) -> Result<ModelBundle> {
    load_bundle(path).context(format!("--bundle {}", path.display()))
}

fn open_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).context(format!("--data {}", path.display()))
}

fn parse_payload(hex: Option<&str>, text: Option<&str>) -> Result<Payload> {
    match (hex, text) {
        (Some(h), None) => Payload::from_hex(h).context("--payload"),
        (None, Some(t)) => Payload::from_text(t).context("--text"),
        _ => Err(CliError::validation("give exactly one of --payload and --text")),
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of pairs.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Side of the square crops.
    #[arg(long, default_value_t = 128)]
    pub crop: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Existing RGB corpus; a procedural one is rendered when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Number of procedural scenes to render.
    #[arg(long, default_value_t = 64)]
    pub scenes: usize,
    /// Side of the procedural scenes.
    #[arg(long, default_value_t = 192)]
    pub scene_size: usize,
    /// Put every pair in one split instead of hashing ids.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("`{s}` is not one of train, val, test")),
    }
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let corpus = match &a.corpus {
        Some(dir) => dir.clone(),
        None => {
            let dir = a.out.join("corpus");
            write_corpus(&dir, a.scenes, a.scene_size, a.seed).context("--out")?;
            dir
        }
    };
    let mut opts = SyntheticOptions::new(a.n, a.crop, a.seed);
    opts.split = a.split;
    let m = generate_synthetic(&corpus, &a.out, opts).context(format!("--corpus {}", corpus.display()))?;
    println!("{} pairs, manifest {}", m.entries.len(), m.manifest_path().display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Directory of `<id>_raw.png` and `<id>_rgb.png` files.
    #[arg(long)]
    pub root: PathBuf,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let m = ingest_dataset(&a.root, Layout::ZrrLike).context(format!("--root {}", a.root.display()))?;
    for r in &m.rejected {
        eprintln!("rejected {}: {}", r.path.display(), r.reason);
    }
    println!(
        "{} pairs, {} rejected, manifest {} ({})",
        m.entries.len(),
        m.rejected.len(),
        m.manifest_path().display(),
        m.fingerprint()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct IspTrainArgs {
    /// Dataset directory or manifest; the train split is used.
    #[arg(long)]
    pub data: PathBuf,
    /// Bundle to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Append per-epoch losses to this JSON-lines file.
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
}

fn telemetry(path: Option<&Path>) -> Result<Telemetry> {
    match path {
        Some(p) => Telemetry::to_file(p).context("--telemetry"),
        None => Ok(Telemetry::new()),
    }
}

fn training_data(path: &Path) -> Result<PairedData> {
    let m = open_manifest(path)?;
    let data = PairedData::from_manifest(&m, Split::Train).context(format!("--data {}", path.display()))?;
    if data.is_empty() {
        return Err(CliError::validation(format!(
            "--data {}: no paired images in the train split",
            path.display()
        )));
    }
    Ok(data)
}

pub fn isp_train(c: &ConfigArgs, a: &IspTrainArgs) -> Result<()> {
    let cfg = c.load()?;
    let data = training_data(&a.data)?;
    let mut bundle = ModelBundle::new(cfg)?;
    let mut tel = telemetry(a.telemetry.as_deref())?;
    training::pretrain_isp(&mut bundle, &data, &mut tel)?;
    tel.flush()?;
    save_bundle(&bundle, &a.out).context(format!("--out {}", a.out.display()))?;
    let last = tel.isp_losses().last().copied().unwrap_or(f64::NAN);
    println!("isp: {} epochs, final L1 {last:.5}, hash {}", tel.isp_losses().len(), bundle.isp_hash()?);
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or manifest; the train split is used.
    #[arg(long)]
    pub data: PathBuf,
    /// Bundle with a pretrained ISP, from `isp-train` or an earlier `train`.
    #[arg(long)]
    pub bundle: PathBuf,
    /// `1`, `2`, `3` or `all`.
    #[arg(long, default_value = "all")]
    pub stage: String,
    /// Continue a bundle that has already completed stages.
    #[arg(long)]
    pub resume: bool,
    /// Where to write the bundle; defaults to overwriting `--bundle`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
}

pub fn train(c: &ConfigArgs, a: &TrainArgs) -> Result<()> {
    let mut bundle = open_bundle(&a.bundle)?;
    if !c.is_empty() {
        let cfg = c.load_over(&bundle.config)?;
        bundle
            .config
            .architecture_matches(&cfg)
            .map_err(|e| CliError::validation(format!("--bundle {}: {e}", a.bundle.display())))?;
        bundle.config = cfg;
    }
    let done = bundle.training_stage_completed;
    if done > 0 && !a.resume {
        return Err(CliError::validation(format!(
            "--bundle {}: already completed stage {done}; pass --resume to continue it",
            a.bundle.display()
        )));
    }
    let stages: Vec<u8> = match a.stage.as_str() {
        "all" => (done + 1..=3).collect(),
        s => match s.parse::<u8>() {
            Ok(n @ 1..=3) => vec![n],
            _ => {
                return Err(CliError::validation(format!(
                    "--stage {s}: expected 1, 2, 3 or all"
                )))
            }
        },
    };
    let data = training_data(&a.data)?;
    let out = a.out.clone().unwrap_or_else(|| a.bundle.clone());
    let opts = TrainOptions {
        stages: stages.clone(),
        checkpoint: Some(out.clone()),
    };
    let mut tel = telemetry(a.telemetry.as_deref())?;
    training::train(&mut bundle, &data, &opts, &mut tel)?;
    tel.flush()?;
    for s in stages {
        for e in tel.epoch_summaries(s) {
            println!(
                "stage {} epoch {}: decode {:.4} total {:.4} clean BER {:.4}",
                e.stage, e.epoch, e.decode, e.total, e.clean_ber
            );
        }
    }
    println!("bundle {} completed stage {}", out.display(), bundle.training_stage_completed);
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// 16-bit RAW PNG.
    #[arg(long)]
    pub raw: PathBuf,
    /// 14 hex characters (56 bits).
    #[arg(long)]
    pub payload: Option<String>,
    /// Up to 7 bytes of UTF-8 text, zero-padded on the right.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let payload = parse_payload(a.payload.as_deref(), a.text.as_deref())?;
    let bundle = open_bundle(&a.bundle)?;
    let raw = load_raw_png(&a.raw).context(format!("--raw {}", a.raw.display()))?;
    let encoded = evaluation::embed(&bundle, &[raw], &[payload]).context(format!("--raw {}", a.raw.display()))?;
    save_raw_png(&encoded[0], &a.out, Some(&bundle.config.fingerprint()))
        .context(format!("--out {}", a.out.display()))?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct DevelopArgs {
    #[arg(long)]
    pub raw: PathBuf,
    /// deep, classical:auto, classical:daylight or classical:camera.
    #[arg(long)]
    pub isp: String,
    /// Store through a JPEG round trip at this quality.
    #[arg(long)]
    pub jpeg: Option<u8>,
    /// Required for the deep ISP.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn develop(c: &ConfigArgs, a: &DevelopArgs) -> Result<()> {
    let isp: IspChoice = a.isp.parse().context("--isp")?;
    let raw = load_raw_png(&a.raw).context(format!("--raw {}", a.raw.display()))?;
    let (rgb, fingerprint) = match isp {
        IspChoice::Deep => {
            let path = a
                .bundle
                .as_ref()
                .ok_or_else(|| CliError::validation("--isp deep needs --bundle"))?;
            let bundle = open_bundle(path)?;
            let rgb = develop_deep(&bundle, &[raw]).context(format!("--raw {}", a.raw.display()))?;
            (rgb, bundle.config.fingerprint())
        }
        IspChoice::Classical(mode) => {
            let cfg = match &a.bundle {
                Some(p) => c.load_over(&open_bundle(p)?.config)?,
                None => c.load()?,
            };
            (develop_classical(&cfg, mode, &[raw])?, cfg.fingerprint())
        }
    };
    let mut rgb = rgb.into_iter().next().expect("one image in, one out");
    if let Some(q) = a.jpeg {
        rgb = jpeg_round_trip(&rgb, q).context("--jpeg")?;
    }
    save_rgb_png(&rgb, &a.out, Some(&fingerprint)).context(format!("--out {}", a.out.display()))?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// 8-bit RGB PNG or JPEG.
    #[arg(long)]
    pub rgb: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Expected payload as 14 hex characters; adds the channel BER.
    #[arg(long)]
    pub truth: Option<String>,
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let truth = a.truth.as_deref().map(Payload::from_hex).transpose().context("--truth")?;
    let bundle = open_bundle(&a.bundle)?;
    let code = evaluation::codec_for(&bundle).context(format!("--bundle {}", a.bundle.display()))?;
    let rgb = load_any_rgb(&a.rgb).context(format!("--rgb {}", a.rgb.display()))?;
    let x = evaluation::extract(&bundle, &[rgb]).context(format!("--rgb {}", a.rgb.display()))?[0];
    println!("payload {}", x.decoded.payload.to_hex());
    match x.decoded.status {
        DecodeStatus::Ok => println!("ecc ok ({} bits corrected)", x.decoded.corrected_bits),
        DecodeStatus::Uncorrectable => println!("ecc uncorrectable"),
    }
    if let Some(t) = truth {
        let sent = code.encode(&t);
        let errors = sent.hamming_distance(&x.message);
        println!("ber {:.4} ({errors} of {} bits)", errors as f64 / sent.bits().len() as f64, sent.bits().len());
        println!("match {}", if evaluation::recovered(&x.decoded, &t) { "yes" } else { "no" });
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalSet {
    /// Dataset directory or manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Payload seed; defaults to the bundle's config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Cap on images; defaults to the config's `eval.images`.
    #[arg(long)]
    pub images: Option<usize>,
}

impl EvalSet {
    fn open(&self) -> Result<(ModelBundle, Vec<rawmark_core::BayerRaw>, u64)> {
        let bundle = open_bundle(&self.bundle)?;
        let m = open_manifest(&self.data)?;
        let limit = self.images.unwrap_or(bundle.config.eval_images);
        let covers = load_covers(&m, self.split, bundle.config.crop_size as usize, limit)
            .context(format!("--data {}", self.data.display()))?;
        if covers.is_empty() {
            return Err(CliError::validation(format!(
                "--data {}: the {:?} split is empty",
                self.data.display(),
                self.split
            )));
        }
        let seed = self.seed.unwrap_or(bundle.config.seed);
        Ok((bundle, covers, seed))
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub set: EvalSet,
    /// Output directory for sweep.csv, sweep.json and the plots.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated kinds; defaults to the config's `eval.kinds`.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<String>,
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let (bundle, covers, seed) = a.set.open()?;
    let kinds: Vec<DistortionKind> = if a.kinds.is_empty() {
        bundle.config.eval_kinds.clone()
    } else {
        a.kinds
            .iter()
            .map(|k| DistortionKind::parse(k).context("--kinds"))
            .collect::<Result<_>>()?
    };
    let result = robustness_sweep(&bundle, &covers, &kinds, seed)?;
    write_sweep(&result, &a.out).context(format!("--out {}", a.out.display()))?;
    println!("clean BER {:.4}", result.clean_ber);
    print!("{}", result.to_csv());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub set: EvalSet,
    /// JSON report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// ISPs to evaluate; defaults to deep, classical:auto and classical:daylight.
    #[arg(long = "isp")]
    pub isps: Vec<String>,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let isps: Vec<IspChoice> = if a.isps.is_empty() {
        IspChoice::CROSS_ISP_DEFAULT.to_vec()
    } else {
        a.isps
            .iter()
            .map(|s| s.parse().context("--isp"))
            .collect::<Result<_>>()?
    };
    let (bundle, covers, seed) = a.set.open()?;
    let report = cross_isp_eval(&bundle, &covers, &isps, seed)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_file(&a.out, json.as_bytes())?;
    println!("isp                 psnr_raw  psnr_rgb  ssim     ber      ser");
    for r in &report.reports {
        println!(
            "{:<19} {:>8.2}  {:>8.2}  {:.4}   {:.4}   {:.4}",
            r.isp.to_string(),
            r.psnr_raw,
            r.psnr_rgb,
            r.ssim_rgb,
            r.ber,
            r.ser
        );
    }
    Ok(())
}
