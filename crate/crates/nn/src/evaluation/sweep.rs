use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rawmark_core::codec::Message;
use rawmark_core::metrics::ber;
use rawmark_core::{BayerRaw, RgbImage};
use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::{codec_for, decode_tensor, develop_deep, embed_messages, payload_for, plot, quantize};
use crate::distortion::{
    apply_single, sample_params, DistortionKind, DistortionParams, ParamsRecord, Schedule,
    SWEEP_LEVELS,
};
use crate::models::ModelBundle;
use crate::tensor::rgbs_to_tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: DistortionKind,
    pub level: u8,
    pub ber: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_fingerprint: String,
    pub seed: u64,
    pub n_images: usize,
    /// BER of the same marked images with no distortion applied.
    pub clean_ber: f64,
    pub rows: Vec<SweepRow>,
    pub records: Vec<ParamsRecord>,
}

impl SweepResult {
    pub fn curve(&self, kind: DistortionKind) -> Vec<(u8, f64)> {
        self.rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| (r.level, r.ber))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,level,ber,n\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.kind, r.level, r.ber, r.n));
        }
        out
    }
}

fn kind_index(kind: DistortionKind) -> u64 {
    DistortionKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64
}

/// Seed of one `(kind, level)` cell; image `i` of the cell draws from stream `i`.
pub fn cell_seed(seed: u64, kind: DistortionKind, level: u8) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind_index(kind) << 8) | u64::from(level));
    rng.random()
}

fn image_rng(cell: u64, image: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cell);
    rng.set_stream(image as u64);
    rng
}

/// Distort one developed image as recorded in a sweep cell.
pub fn replay_cell_image(
    record: &ParamsRecord,
    image: usize,
    rgb: &Tensor,
) -> Result<Tensor> {
    let p = record.params.get(image).ok_or_else(|| {
        Error::Distortion(format!("cell has {} images, asked for {image}", record.params.len()))
    })?;
    let mut rng = image_rng(record.seed, image);
    sample_params(&Schedule::sweep(record.level)?, &mut rng)?;
    apply_single(record.kind, rgb, &[*p], &mut rng)
}

/// Embed seeded payloads, develop with the deep ISP, store as 8-bit, then
/// apply each distortion kind alone at every sweep level and measure BER.
pub fn robustness_sweep(
    bundle: &ModelBundle,
    covers: &[BayerRaw],
    kinds: &[DistortionKind],
    seed: u64,
) -> Result<SweepResult> {
    if covers.is_empty() {
        return Err(Error::Shape("no evaluation images".into()));
    }
    let code = codec_for(bundle)?;
    let messages: Vec<Message> = (0..covers.len())
        .map(|i| code.encode(&payload_for(seed, i)))
        .collect();
    let encoded = embed_messages(bundle, covers, &messages)?;
    let developed: Vec<RgbImage> = develop_deep(bundle, &encoded)?
        .iter()
        .map(quantize)
        .collect::<Result<_>>()?;
    let images: Vec<Tensor> = developed
        .iter()
        .map(|img| rgbs_to_tensor(&[img]))
        .collect::<Result<_>>()?;
    let batch = bundle.config.batch_size.max(1);

    let decode_all = |tensors: &[Tensor]| -> Result<Vec<Message>> {
        let mut out = Vec::with_capacity(tensors.len());
        for chunk in tensors.chunks(batch) {
            out.extend(decode_tensor(bundle, &Tensor::cat(chunk, 0))?);
        }
        Ok(out)
    };
    let clean_ber = ber(&messages, &decode_all(&images)?)?;

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &kind in kinds {
        for level in 0..SWEEP_LEVELS {
            let schedule = Schedule::sweep(level)?;
            let cell = cell_seed(seed, kind, level);
            let mut params = Vec::with_capacity(images.len());
            let mut distorted = Vec::with_capacity(images.len());
            for (i, img) in images.iter().enumerate() {
                let mut rng = image_rng(cell, i);
                let p: DistortionParams = sample_params(&schedule, &mut rng)?.only(kind);
                distorted.push(tch::no_grad(|| apply_single(kind, img, &[p], &mut rng))?);
                params.push(p);
            }
            rows.push(SweepRow {
                kind,
                level,
                ber: ber(&messages, &decode_all(&distorted)?)?,
                n: images.len(),
            });
            records.push(ParamsRecord {
                kind,
                level,
                seed: cell,
                params,
            });
        }
    }
    Ok(SweepResult {
        config_fingerprint: bundle.config.fingerprint(),
        seed,
        n_images: covers.len(),
        clean_ber,
        rows,
        records,
    })
}

#[derive(Debug, Serialize)]
struct SweepFile<'a> {
    #[serde(flatten)]
    result: &'a SweepResult,
    plots: Vec<plot::PlotSidecar>,
}

/// Write `sweep.csv`, `sweep.json` and one `ber_<kind>.png` per kind into
/// `dir`; returns the paths written.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut plots = Vec::new();
    let mut kinds: Vec<DistortionKind> = result.rows.iter().map(|r| r.kind).collect();
    kinds.dedup();
    for kind in kinds {
        let path = dir.join(format!("ber_{kind}.png"));
        plots.push(plot::ber_curve(
            &path,
            kind,
            &result.curve(kind),
            result.clean_ber,
            &result.config_fingerprint,
        )?);
        written.push(path);
    }

    let csv = dir.join("sweep.csv");
    let mut f = fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    writeln!(f, "# config_fingerprint={}", result.config_fingerprint)
        .and_then(|_| f.write_all(result.to_csv().as_bytes()))
        .map_err(|e| Error::io(&csv, e))?;
    written.push(csv);

    let json = dir.join("sweep.json");
    let text = serde_json::to_string_pretty(&SweepFile { result, plots })
        .map_err(|e| Error::Training(e.to_string()))?;
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    written.push(json);
    Ok(written)
}

/// Parse the rows of a `sweep.csv`, skipping the fingerprint comment.
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let bad = |line: &str| Error::Shape(format!("malformed sweep row `{line}`"));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("kind,") && !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            Ok(SweepRow {
                kind: DistortionKind::parse(f[0])?,
                level: f[1].parse().map_err(|_| bad(line))?,
                ber: f[2].parse().map_err(|_| bad(line))?,
                n: f[3].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::tests::{covers, tiny_bundle};
    use super::*;

    #[test]
    fn cells_are_reproducible_and_distinct() {
        let a = cell_seed(4, DistortionKind::Noise, 3);
        assert_eq!(a, cell_seed(4, DistortionKind::Noise, 3));
        assert_ne!(a, cell_seed(4, DistortionKind::Noise, 4));
        assert_ne!(a, cell_seed(4, DistortionKind::Jpeg, 3));
        assert_ne!(a, cell_seed(5, DistortionKind::Noise, 3));
    }

    #[test]
    fn sweep_covers_every_level_and_replays() {
        let b = tiny_bundle();
        let c = covers(2);
        let kinds = [DistortionKind::Jpeg, DistortionKind::Noise];
        let r = robustness_sweep(&b, &c, &kinds, 11).unwrap();
        assert_eq!(r.rows.len(), 20);
        assert!(r.rows.iter().all(|row| row.n == 2 && (0.0..=1.0).contains(&row.ber)));
        for rec in &r.records {
            let bounds = Schedule::sweep(rec.level).unwrap().bounds();
            for p in &rec.params {
                assert!(bounds.contains(p));
                assert_eq!(*p, p.only(rec.kind));
            }
        }
        assert!(r.records.iter().filter(|x| x.kind == DistortionKind::Jpeg && x.level == 0)
            .all(|x| x.params.iter().all(|p| p.jpeg_quality == 100)));
        assert_eq!(robustness_sweep(&b, &c, &kinds, 11).unwrap(), r);

        let dev = develop_deep(&b, &c).unwrap();
        let img = rgbs_to_tensor(&[&quantize(&dev[1]).unwrap()]).unwrap();
        let rec = &r.records[19];
        let mut rng = image_rng(rec.seed, 1);
        sample_params(&Schedule::sweep(rec.level).unwrap(), &mut rng).unwrap();
        let want = apply_single(rec.kind, &img, &[rec.params[1]], &mut rng).unwrap();
        let got = replay_cell_image(rec, 1, &img).unwrap();
        assert!(got.equal(&want));
    }

    #[test]
    fn artifacts_round_trip() {
        let b = tiny_bundle();
        let r = robustness_sweep(&b, &covers(1), &[DistortionKind::Contrast], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_sweep(&r, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(csv.contains(&r.config_fingerprint));
        assert_eq!(read_sweep_csv(&csv).unwrap(), r.rows);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
        assert_eq!(json["config_fingerprint"], r.config_fingerprint.as_str());
        assert_eq!(json["records"].as_array().unwrap().len(), 10);
        assert_eq!(json["plots"][0]["file"], "ber_contrast.png");
        let png = image::open(dir.path().join("ber_contrast.png")).unwrap();
        assert!(png.width() > 100);
    }
}
