//! Run configuration: one flat document of dotted keys covering training,
//! architecture, classical ISP and evaluation settings.
//!
//! Files are TOML; `wb.mode = "auto"` and a `[wb]` table with `mode = "auto"`
//! are equivalent. Unknown keys are rejected. Values set on the command line
//! (`key=value`, value in TOML syntax) override the file.

use std::collections::BTreeMap;
use std::path::Path;

use rawmark_core::classical_isp::WhiteBalance;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distortion::DistortionKind;
use crate::models::EncoderVariant;
use crate::{Error, Result};

/// Environment variable naming a config file when none is given explicitly.
pub const CONFIG_ENV: &str = "RAWIW_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptualLoss {
    /// Term replaced by zero.
    Off,
    /// Mean absolute difference, a stand-in for a learned perceptual metric.
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WbMode {
    Auto,
    Camera,
    Daylight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub crop_size: i64,
    pub batch_size: usize,
    pub stage_epochs: [usize; 3],
    pub lr_encdec: f64,
    pub lr_disc: f64,
    /// Weights of decode, RAW L2, RGB L2, perceptual and critic terms.
    pub lambda: [f64; 5],
    pub perceptual_loss: PerceptualLoss,
    pub distortion_enabled: bool,

    #[serde(rename = "encoder.variant")]
    pub encoder_variant: EncoderVariant,
    #[serde(rename = "encoder.base_channels")]
    pub encoder_base: i64,
    #[serde(rename = "encoder.depth")]
    pub encoder_depth: usize,
    #[serde(rename = "decoder.width")]
    pub decoder_width: i64,
    #[serde(rename = "decoder.hidden")]
    pub decoder_hidden: i64,
    #[serde(rename = "disc.base_channels")]
    pub disc_base: i64,
    #[serde(rename = "disc.clip")]
    pub disc_clip: f64,

    #[serde(rename = "isp.base_channels")]
    pub isp_base: i64,
    #[serde(rename = "isp.depth")]
    pub isp_depth: usize,
    #[serde(rename = "isp.epochs")]
    pub isp_epochs: usize,
    #[serde(rename = "isp.lr")]
    pub isp_lr: f64,

    #[serde(rename = "wb.mode")]
    pub wb_mode: WbMode,
    #[serde(rename = "wb.gains")]
    pub wb_gains: [f32; 3],
    #[serde(rename = "jpeg.quality", skip_serializing_if = "Option::is_none")]
    pub jpeg_quality: Option<u8>,

    #[serde(rename = "eval.kinds")]
    pub eval_kinds: Vec<DistortionKind>,
    /// Cap on evaluation images; 0 uses the whole test split.
    #[serde(rename = "eval.images")]
    pub eval_images: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            crop_size: 128,
            batch_size: 4,
            stage_epochs: [5, 5, 10],
            lr_encdec: 5e-5,
            lr_disc: 5e-5,
            lambda: [2.0, 1.0, 1.0, 1.0, 1.0],
            perceptual_loss: PerceptualLoss::Off,
            distortion_enabled: true,
            encoder_variant: EncoderVariant::Combined,
            encoder_base: 32,
            encoder_depth: 4,
            decoder_width: 32,
            decoder_hidden: 512,
            disc_base: 8,
            disc_clip: 0.01,
            isp_base: 32,
            isp_depth: 4,
            isp_epochs: 30,
            isp_lr: 2e-3,
            wb_mode: WbMode::Auto,
            wb_gains: [1.0, 1.0, 1.0],
            jpeg_quality: None,
            eval_kinds: DistortionKind::ALL.to_vec(),
            eval_images: 0,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn parse_document(text: &str, origin: &str) -> Result<BTreeMap<String, toml::Value>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigValue {
        key: origin.to_owned(),
        reason: e.message().to_owned(),
    })?;
    let mut out = BTreeMap::new();
    flatten("", &table, &mut out);
    Ok(out)
}

/// Parse one `key=value` override; the value uses TOML syntax, and bare words
/// are taken as strings.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, value) = s.split_once('=').ok_or_else(|| Error::ConfigValue {
        key: s.to_owned(),
        reason: "expected key=value".into(),
    })?;
    let key = key.trim().to_owned();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()));
    Ok((key, parsed))
}

impl RunConfig {
    /// Merge an optional file (or `$RAWIW_CONFIG`) with overrides.
    pub fn load(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(std::path::PathBuf::from);
        let mut merged = BTreeMap::new();
        if let Some(path) = file.map(Path::to_path_buf).or(env_path) {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            merged = parse_document(&text, &path.display().to_string())?;
        }
        for (k, v) in overrides {
            merged.insert(k.clone(), v.clone());
        }
        Self::from_flat(merged)
    }

    /// This config with some keys replaced.
    pub fn with_overrides(&self, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut merged = parse_document(&self.to_toml(), "<config>")?;
        for (k, v) in overrides {
            merged.insert(k.clone(), v.clone());
        }
        Self::from_flat(merged)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_flat(parse_document(text, "<config>")?)
    }

    fn from_flat(map: BTreeMap<String, toml::Value>) -> Result<Self> {
        let known = serde_json::to_value(Self::default()).expect("config serialises");
        let known = known.as_object().expect("config is an object");
        let mut obj = serde_json::Map::new();
        for (k, v) in map {
            if !known.contains_key(&k) && k != "jpeg.quality" {
                return Err(Error::UnknownKey(k));
            }
            let v = serde_json::to_value(&v).map_err(|e| Error::ConfigValue {
                key: k.clone(),
                reason: e.to_string(),
            })?;
            obj.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| {
            Error::ConfigValue {
                key: "<document>".into(),
                reason: e.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::ConfigValue {
                key: key.into(),
                reason,
            })
        };
        if self.crop_size <= 0 || self.crop_size % 32 != 0 {
            return bad("crop_size", format!("{} is not a positive multiple of 32", self.crop_size));
        }
        for (key, depth, factor) in [
            ("encoder.depth", self.encoder_depth, 1i64),
            ("isp.depth", self.isp_depth, 2),
        ] {
            if depth == 0 || self.crop_size % (factor << (depth - 1)) != 0 {
                return bad(key, format!("depth {depth} does not divide crop {}", self.crop_size));
            }
        }
        for (key, v) in [
            ("lr_encdec", self.lr_encdec),
            ("lr_disc", self.lr_disc),
            ("isp.lr", self.isp_lr),
            ("disc.clip", self.disc_clip),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(key, format!("{v} must be positive"));
            }
        }
        if let Some(i) = self.lambda.iter().position(|l| !(*l > 0.0)) {
            return bad("lambda", format!("lambda{} = {} must be positive", i + 1, self.lambda[i]));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        for (key, v) in [
            ("encoder.base_channels", self.encoder_base),
            ("decoder.width", self.decoder_width),
            ("decoder.hidden", self.decoder_hidden),
            ("disc.base_channels", self.disc_base),
            ("isp.base_channels", self.isp_base),
        ] {
            if v <= 0 {
                return bad(key, format!("{v} must be positive"));
            }
        }
        if self.wb_gains.iter().any(|g| !(*g > 0.0)) {
            return bad("wb.gains", format!("{:?} must be positive", self.wb_gains));
        }
        if let Some(q) = self.jpeg_quality {
            if !(1..=100).contains(&q) {
                return bad("jpeg.quality", format!("{q} outside 1..=100"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let mut out = String::new();
        for (k, v) in value.as_object().expect("object") {
            let v: toml::Value = serde_json::from_value(v.clone()).expect("json maps to toml");
            out.push_str(&format!("\"{k}\" = {v}\n"));
        }
        out
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn white_balance(&self, mode: WbMode) -> WhiteBalance {
        match mode {
            WbMode::Auto => WhiteBalance::Auto,
            WbMode::Daylight => WhiteBalance::Daylight,
            WbMode::Camera => WhiteBalance::Camera {
                gains: self.wb_gains,
            },
        }
    }

    /// Keys that fix network shapes; a checkpoint can only be resumed or
    /// loaded under a config that agrees on all of them.
    pub fn architecture_matches(&self, other: &RunConfig) -> std::result::Result<(), String> {
        let pairs: Vec<(&str, String, String)> = vec![
            ("crop_size", self.crop_size.to_string(), other.crop_size.to_string()),
            (
                "encoder.variant",
                format!("{:?}", self.encoder_variant),
                format!("{:?}", other.encoder_variant),
            ),
            ("encoder.base_channels", self.encoder_base.to_string(), other.encoder_base.to_string()),
            ("encoder.depth", self.encoder_depth.to_string(), other.encoder_depth.to_string()),
            ("decoder.width", self.decoder_width.to_string(), other.decoder_width.to_string()),
            ("decoder.hidden", self.decoder_hidden.to_string(), other.decoder_hidden.to_string()),
            ("disc.base_channels", self.disc_base.to_string(), other.disc_base.to_string()),
            ("isp.base_channels", self.isp_base.to_string(), other.isp_base.to_string()),
            ("isp.depth", self.isp_depth.to_string(), other.isp_depth.to_string()),
        ];
        match pairs.iter().find(|(_, a, b)| a != b) {
            Some((k, a, b)) => Err(format!("`{k}` is {b} but the checkpoint has {a}")),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_on_top_of_an_existing_config() {
        let base = RunConfig::from_toml_str("seed = 3\njpeg.quality = 90\n").unwrap();
        let o = vec![parse_override("distortion_enabled=false").unwrap()];
        let c = base.with_overrides(&o).unwrap();
        assert_eq!((c.seed, c.jpeg_quality, c.distortion_enabled), (3, Some(90), false));
        assert_eq!(base.with_overrides(&[]).unwrap(), base);
        assert!(base.with_overrides(&[("nope".into(), toml::Value::Integer(1))]).is_err());
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = RunConfig::from_toml_str("wb.mode = \"daylight\"\nseed = 7\n").unwrap();
        let b = RunConfig::from_toml_str("seed = 7\n[wb]\nmode = \"daylight\"\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.wb_mode, WbMode::Daylight);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("learning_rate = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::UnknownKey(k) if k == "learning_rate"));
    }

    #[test]
    fn invalid_values_name_the_key() {
        let err = RunConfig::from_toml_str("crop_size = 100\n").unwrap_err();
        assert!(err.to_string().contains("crop_size"));
        let err = RunConfig::from_toml_str("lambda = [2.0, 1.0, 0.0, 1.0, 1.0]\n").unwrap_err();
        assert!(err.to_string().contains("lambda"));
    }

    #[test]
    fn overrides_win_and_change_the_fingerprint() {
        let base = RunConfig::default();
        let o = parse_override("lr_encdec=1e-4").unwrap();
        let cfg = RunConfig::load(None, &[o]).unwrap();
        assert_eq!(cfg.lr_encdec, 1e-4);
        assert_ne!(cfg.fingerprint(), base.fingerprint());
        let (_, v) = parse_override("encoder.variant=raw_only").unwrap();
        assert_eq!(v, toml::Value::String("raw_only".into()));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.jpeg_quality = Some(90);
        cfg.stage_epochs = [1, 2, 3];
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }
}
