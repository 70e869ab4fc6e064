//! Model bundles: every network's weights plus the run config and codec
//! parameters in one checksummed file.
//!
//! ```text
//! magic "RAWIWB\0\x01" | u64 LE header length | JSON header
//! | f32 LE tensor data | sha256 of everything before it
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rawmark_core::codec::{CodecParams, MESSAGE_BITS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tch::{nn, Device, Kind, Tensor};

use super::{Decoder, DeepIsp, Discriminator, Encoder, EncoderConfig};
use crate::config::RunConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "rawiw-bundle-1";
const MAGIC: &[u8; 8] = b"RAWIWB\0\x01";
const GROUPS: [&str; 3] = ["watermark", "critic", "isp"];

/// All networks of one run. Encoder and decoder share a store so a single
/// Adam instance drives both; the critic and the ISP have their own.
#[derive(Debug)]
pub struct Networks {
    pub watermark_vs: nn::VarStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub critic_vs: nn::VarStore,
    pub critic: Discriminator,
    pub isp_vs: nn::VarStore,
    pub isp: DeepIsp,
}

impl Networks {
    /// Fresh weights drawn from the torch generator seeded with `config.seed`.
    pub fn new(config: &RunConfig) -> Result<Self> {
        tch::manual_seed(config.seed as i64);
        let watermark_vs = nn::VarStore::new(Device::Cpu);
        let encoder = Encoder::new(
            watermark_vs.root() / "encoder",
            EncoderConfig {
                variant: config.encoder_variant,
                message_length: MESSAGE_BITS,
                base_channels: config.encoder_base,
                depth: config.encoder_depth,
                size: config.crop_size,
            },
        )?;
        let decoder = Decoder::new(
            watermark_vs.root() / "decoder",
            config.decoder_width,
            config.decoder_hidden,
            config.crop_size,
        )?;
        let critic_vs = nn::VarStore::new(Device::Cpu);
        let critic = Discriminator::new(critic_vs.root(), config.disc_base);
        let mut isp_vs = nn::VarStore::new(Device::Cpu);
        let isp = DeepIsp::new(isp_vs.root(), config.isp_base, config.isp_depth);
        isp_vs.freeze();
        Ok(Self {
            watermark_vs,
            encoder,
            decoder,
            critic_vs,
            critic,
            isp_vs,
            isp,
        })
    }

    fn store(&self, group: &str) -> &nn::VarStore {
        match group {
            "watermark" => &self.watermark_vs,
            "critic" => &self.critic_vs,
            _ => &self.isp_vs,
        }
    }

    /// Copy every variable of `group` from `other` (same architecture).
    pub fn copy_group_from(&mut self, group: &str, other: &Networks) -> Result<()> {
        let src = other.store(group).variables();
        copy_into(self.store(group), |name| src.get(name).map(Tensor::shallow_clone))
    }
}

fn copy_into(vs: &nn::VarStore, lookup: impl Fn(&str) -> Option<Tensor>) -> Result<()> {
    tch::no_grad(|| {
        for (name, mut var) in vs.variables() {
            let src = lookup(&name)
                .ok_or_else(|| Error::Shape(format!("missing tensor `{name}`")))?;
            if src.size() != var.size() {
                return Err(Error::Shape(format!(
                    "tensor `{name}`: {:?} vs {:?}",
                    src.size(),
                    var.size()
                )));
            }
            var.copy_(&src);
        }
        Ok(())
    })
}

fn sorted_f32(vs: &nn::VarStore) -> Result<BTreeMap<String, (Vec<i64>, Vec<f32>)>> {
    vs.variables()
        .into_iter()
        .map(|(name, t)| {
            let data = Vec::<f32>::try_from(&t.detach().to_kind(Kind::Float).contiguous().view([-1]))?;
            Ok((name, (t.size(), data)))
        })
        .collect()
}

/// Hex sha256 over the ISP's variable names, shapes and values.
pub fn isp_hash(vs: &nn::VarStore) -> Result<String> {
    let mut h = Sha256::new();
    for (name, (shape, data)) in sorted_f32(vs)? {
        h.update(name.as_bytes());
        for d in shape {
            h.update(d.to_le_bytes());
        }
        for v in data {
            h.update(v.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorRecord {
    group: String,
    name: String,
    shape: Vec<i64>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema_version: String,
    config: RunConfig,
    codec: CodecParams,
    training_stage_completed: u8,
    config_fingerprint: String,
    isp_hash: String,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug)]
pub struct ModelBundle {
    pub config: RunConfig,
    pub codec: CodecParams,
    pub training_stage_completed: u8,
    pub nets: Networks,
}

impl ModelBundle {
    pub fn new(config: RunConfig) -> Result<Self> {
        let nets = Networks::new(&config)?;
        Ok(Self {
            config,
            codec: CodecParams::default(),
            training_stage_completed: 0,
            nets,
        })
    }

    pub fn isp_hash(&self) -> Result<String> {
        isp_hash(&self.nets.isp_vs)
    }

    pub fn check_codec(&self, expected: &CodecParams) -> Result<()> {
        if &self.codec != expected {
            return Err(Error::CodecMismatch {
                bundle: self.codec,
                expected: *expected,
            });
        }
        Ok(())
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    for group in GROUPS {
        for (name, (shape, data)) in sorted_f32(bundle.nets.store(group))? {
            records.push(TensorRecord {
                group: group.into(),
                name,
                shape,
                offset: blob.len(),
                len: data.len(),
            });
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = Header {
        schema_version: SCHEMA_VERSION.into(),
        config: bundle.config.clone(),
        codec: bundle.codec,
        training_stage_completed: bundle.training_stage_completed,
        config_fingerprint: bundle.config.fingerprint(),
        isp_hash: bundle.isp_hash()?,
        tensors: records,
    };
    let header = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + blob.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blob);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = |reason: &str| Error::BundleFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(format("bad magic"));
    }
    if bytes.len() < MAGIC.len() + 8 + 32 {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
        });
    }
    let hlen = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let header_bytes = body
        .get(16..16 + hlen)
        .ok_or_else(|| format("header overruns file"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| format(&format!("header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    header.config.validate()?;
    let blob = &body[16 + hlen..];
    let mut tensors: BTreeMap<(String, String), Tensor> = BTreeMap::new();
    for r in &header.tensors {
        let raw = blob
            .get(r.offset..r.offset + 4 * r.len)
            .ok_or_else(|| format(&format!("tensor `{}` overruns file", r.name)))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.insert(
            (r.group.clone(), r.name.clone()),
            Tensor::from_slice(&data).view(r.shape.as_slice()),
        );
    }
    let nets = Networks::new(&header.config)?;
    for group in GROUPS {
        copy_into(nets.store(group), |name| {
            tensors
                .get(&(group.to_owned(), name.to_owned()))
                .map(Tensor::shallow_clone)
        })
        .map_err(|e| format(&e.to_string()))?;
    }
    Ok(ModelBundle {
        config: header.config,
        codec: header.codec,
        training_stage_completed: header.training_stage_completed,
        nets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> RunConfig {
        RunConfig {
            crop_size: 32,
            encoder_base: 4,
            encoder_depth: 2,
            decoder_width: 4,
            decoder_hidden: 16,
            disc_base: 4,
            isp_base: 4,
            isp_depth: 2,
            seed: 5,
            ..RunConfig::default()
        }
    }

    fn perturb(vs: &nn::VarStore) {
        tch::no_grad(|| {
            for mut v in vs.trainable_variables() {
                let noise = v.randn_like() * 0.1;
                let _ = v.g_add_(&noise);
            }
        });
    }

    #[test]
    fn save_load_restores_forward_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.rawiw");
        let mut bundle = ModelBundle::new(tiny_config()).unwrap();
        bundle.training_stage_completed = 2;
        perturb(&bundle.nets.watermark_vs);
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.training_stage_completed, 2);
        assert_eq!(loaded.config, bundle.config);
        assert_eq!(loaded.isp_hash().unwrap(), bundle.isp_hash().unwrap());

        tch::manual_seed(0);
        let raw = Tensor::rand([2, 1, 32, 32], (Kind::Float, Device::Cpu));
        let msg = Tensor::rand([2, 100], (Kind::Float, Device::Cpu)).round();
        let run = |b: &ModelBundle| {
            let (enc, _) = b.nets.encoder.forward(&raw, &msg).unwrap();
            let rgb = b.nets.isp.forward(&enc).unwrap();
            (enc, b.nets.decoder.forward(&rgb).unwrap(), b.nets.critic.forward(&rgb))
        };
        let (a, b) = (run(&bundle), run(&loaded));
        assert!(a.0.equal(&b.0) && a.1.equal(&b.1) && a.2.equal(&b.2));
    }

    #[test]
    fn truncated_file_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.rawiw");
        save_bundle(&ModelBundle::new(tiny_config()).unwrap(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(load_bundle(&path), Err(Error::Checksum { .. })));
    }

    #[test]
    fn other_schema_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.rawiw");
        save_bundle(&ModelBundle::new(tiny_config()).unwrap(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let body_len = bytes.len() - 32;
        let pos = bytes
            .windows(SCHEMA_VERSION.len())
            .position(|w| w == SCHEMA_VERSION.as_bytes())
            .unwrap();
        bytes[pos + SCHEMA_VERSION.len() - 1] = b'9';
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_bundle(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn codec_mismatch_is_explicit() {
        let bundle = ModelBundle::new(tiny_config()).unwrap();
        let other = CodecParams {
            t: 4,
            ..CodecParams::default()
        };
        assert!(matches!(bundle.check_codec(&other), Err(Error::CodecMismatch { .. })));
        bundle.check_codec(&CodecParams::default()).unwrap();
    }
}
