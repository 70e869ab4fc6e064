//! Paired RAW/RGB datasets and their line-delimited JSON manifests.
//!
//! A manifest lives in the dataset root as `manifest.jsonl`: one header
//! record, then one record per accepted pair and one per rejected file. Paths
//! are relative to the root so a dataset can be moved as a whole.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pngio::{load_any_rgb, load_raw_png, load_rgb_png, save_raw_png, save_rgb_png};
use crate::raw::mosaic_from_rgb;
use crate::{BayerRaw, Error, Result, RgbImage};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_INVERSE_GAMMA: f32 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// 80/10/10 by the first byte of `sha256(id)`, stable across runs.
    pub fn for_id(id: &str) -> Split {
        match Sha256::digest(id.as_bytes())[0] % 10 {
            0..=7 => Split::Train,
            8 => Split::Val,
            _ => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ZrrLike,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub raw_path: PathBuf,
    pub rgb_path: Option<PathBuf>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header {
        version: u32,
        provenance: Provenance,
    },
    Entry(ManifestEntry),
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub provenance: Provenance,
    pub entries: Vec<ManifestEntry>,
    pub rejected: Vec<Rejection>,
}

impl DatasetManifest {
    fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Record::Header {
            version: MANIFEST_VERSION,
            provenance: self.provenance,
        };
        let records = std::iter::once(header)
            .chain(self.entries.iter().cloned().map(Record::Entry))
            .chain(self.rejected.iter().cloned().map(Record::Rejected));
        for r in records {
            out.push_str(&serde_json::to_string(&r).expect("manifest records serialise"));
            out.push('\n');
        }
        out
    }

    /// Hex sha256 of the serialised manifest.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.manifest_path();
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Accepts either the manifest file or the directory holding it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let root = file
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut provenance = None;
        let mut entries = Vec::new();
        let mut rejected = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: Record = serde_json::from_str(line).map_err(|e| {
                Error::Dataset(format!("{}: line {}: {e}", file.display(), n + 1))
            })?;
            match record {
                Record::Header {
                    version,
                    provenance: p,
                } => {
                    if version != MANIFEST_VERSION {
                        return Err(Error::Dataset(format!(
                            "{}: manifest version {version}, expected {MANIFEST_VERSION}",
                            file.display()
                        )));
                    }
                    provenance = Some(p);
                }
                Record::Entry(e) => entries.push(e),
                Record::Rejected(r) => rejected.push(r),
            }
        }
        let provenance = provenance
            .ok_or_else(|| Error::Dataset(format!("{}: missing header record", file.display())))?;
        Ok(Self {
            root,
            provenance,
            entries,
            rejected,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn load_raw(&self, entry: &ManifestEntry) -> Result<BayerRaw> {
        load_raw_png(self.root.join(&entry.raw_path))
    }

    pub fn load_rgb(&self, entry: &ManifestEntry) -> Result<Option<RgbImage>> {
        entry
            .rgb_path
            .as_ref()
            .map(|p| load_rgb_png(self.root.join(p)))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `<id>_raw.png` (16-bit gray) with an optional `<id>_rgb.png` (8-bit RGB).
    ZrrLike,
}

fn check_pair(root: &Path, id: &str, raw_rel: &Path, rgb_rel: Option<&Path>) -> Result<()> {
    let raw = load_raw_png(root.join(raw_rel))?;
    if let Some(rgb_rel) = rgb_rel {
        let rgb = load_rgb_png(root.join(rgb_rel))?;
        if (rgb.height(), rgb.width()) != (raw.height(), raw.width()) {
            return Err(Error::Dataset(format!(
                "{id}: RAW is {}x{} but RGB is {}x{}",
                raw.height(),
                raw.width(),
                rgb.height(),
                rgb.width()
            )));
        }
    }
    Ok(())
}

/// Scan `root`, validate every pair and write `root/manifest.jsonl`.
/// Malformed files become rejection records; the call fails only when the
/// directory holds no candidates or none of them validate.
pub fn ingest_dataset(root: impl AsRef<Path>, layout: Layout) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let Layout::ZrrLike = layout;
    let listing = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut raws: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut rgbs: BTreeMap<String, PathBuf> = BTreeMap::new();
    for item in listing {
        let item = item.map_err(|e| Error::io(root, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix("_raw.png") {
            raws.insert(id.to_owned(), PathBuf::from(&name));
        } else if let Some(id) = name.strip_suffix("_rgb.png") {
            rgbs.insert(id.to_owned(), PathBuf::from(&name));
        }
    }
    if raws.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no <id>_raw.png files found",
            root.display()
        )));
    }
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for (id, raw_path) in raws {
        let rgb_path = rgbs.remove(&id);
        match check_pair(root, &id, &raw_path, rgb_path.as_deref()) {
            Ok(()) => entries.push(ManifestEntry {
                split: Split::for_id(&id),
                id,
                raw_path,
                rgb_path,
            }),
            Err(e) => rejected.push(Rejection {
                path: raw_path,
                reason: e.to_string(),
            }),
        }
    }
    for (_, orphan) in rgbs {
        rejected.push(Rejection {
            path: orphan,
            reason: "RGB image without a matching _raw.png".into(),
        });
    }
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: all {} candidates were rejected",
            root.display(),
            rejected.len()
        )));
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        provenance: Provenance::ZrrLike,
        entries,
        rejected,
    };
    manifest.save()?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOptions {
    pub n: usize,
    pub crop: usize,
    pub seed: u64,
    pub inverse_gamma: f32,
    /// Put every pair in this split instead of hashing ids.
    pub split: Option<Split>,
}

impl SyntheticOptions {
    pub fn new(n: usize, crop: usize, seed: u64) -> Self {
        Self {
            n,
            crop,
            seed,
            inverse_gamma: DEFAULT_INVERSE_GAMMA,
            split: None,
        }
    }
}

fn corpus_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png" | "jpg" | "jpeg")
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Random even-aligned crops of an RGB corpus, mosaicked into RAW pairs and
/// written to `out_dir` with a manifest. Deterministic per seed.
pub fn generate_synthetic(
    corpus_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    opts: SyntheticOptions,
) -> Result<DatasetManifest> {
    let (corpus_dir, out_dir) = (corpus_dir.as_ref(), out_dir.as_ref());
    if opts.crop == 0 || opts.crop % 4 != 0 {
        return Err(Error::Dataset(format!(
            "crop size {} must be a positive multiple of 4",
            opts.crop
        )));
    }
    let mut images = Vec::new();
    for path in corpus_images(corpus_dir)? {
        let img = load_any_rgb(&path)?;
        if img.height() >= opts.crop && img.width() >= opts.crop {
            images.push(img);
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no image is at least {}x{}",
            corpus_dir.display(),
            opts.crop,
            opts.crop
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut entries = Vec::with_capacity(opts.n);
    for i in 0..opts.n {
        let src = &images[rng.random_range(0..images.len())];
        let top = 2 * rng.random_range(0..=(src.height() - opts.crop) / 2);
        let left = 2 * rng.random_range(0..=(src.width() - opts.crop) / 2);
        let rgb = src.crop(top, left, opts.crop, opts.crop)?;
        let raw = mosaic_from_rgb(&rgb, opts.inverse_gamma)?;
        let id = format!("syn_{i:05}");
        let raw_path = PathBuf::from(format!("{id}_raw.png"));
        let rgb_path = PathBuf::from(format!("{id}_rgb.png"));
        save_raw_png(&raw, out_dir.join(&raw_path), None)?;
        save_rgb_png(&rgb, out_dir.join(&rgb_path), None)?;
        entries.push(ManifestEntry {
            split: opts.split.unwrap_or_else(|| Split::for_id(&id)),
            id,
            raw_path,
            rgb_path: Some(rgb_path),
        });
    }
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        provenance: Provenance::Synthetic,
        entries,
        rejected: Vec::new(),
    };
    manifest.save()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_isp::{develop, WhiteBalance};
    use crate::metrics::psnr;
    use crate::synthetic::write_corpus;

    fn write_pair(dir: &Path, id: &str, v: f32) {
        let raw = BayerRaw::constant(v, 8, 8).unwrap();
        save_raw_png(&raw, dir.join(format!("{id}_raw.png")), None).unwrap();
        let rgb = RgbImage::constant([v; 3], 8, 8).unwrap();
        save_rgb_png(&rgb, dir.join(format!("{id}_rgb.png")), None).unwrap();
    }

    #[test]
    fn ingest_three_pairs() {
        let dir = tempfile::tempdir().unwrap();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            write_pair(dir.path(), id, 0.1 * i as f32);
        }
        let m = ingest_dataset(dir.path(), Layout::ZrrLike).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert!(m.rejected.is_empty());
        let again = ingest_dataset(dir.path(), Layout::ZrrLike).unwrap();
        assert_eq!(m.fingerprint(), again.fingerprint());
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn corrupt_png_is_rejected_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", 0.1);
        write_pair(dir.path(), "b", 0.2);
        fs::write(dir.path().join("c_raw.png"), b"not a png").unwrap();
        let m = ingest_dataset(dir.path(), Layout::ZrrLike).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.rejected.len(), 1);
        assert_eq!(m.rejected[0].path, PathBuf::from("c_raw.png"));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest_dataset(dir.path(), Layout::ZrrLike),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let corpus = tempfile::tempdir().unwrap();
        write_corpus(corpus.path(), 3, 48, 1).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let opts = SyntheticOptions::new(10, 32, 9);
        let ma = generate_synthetic(corpus.path(), a.path(), opts).unwrap();
        let mb = generate_synthetic(corpus.path(), b.path(), opts).unwrap();
        assert_eq!(ma.entries.len(), 10);
        assert_eq!(ma.fingerprint(), mb.fingerprint());
        for e in &ma.entries {
            for p in [&e.raw_path, e.rgb_path.as_ref().unwrap()] {
                assert_eq!(fs::read(a.path().join(p)).unwrap(), fs::read(b.path().join(p)).unwrap());
            }
        }
    }

    #[test]
    fn synthetic_raw_redevelops_close_to_source() {
        let corpus = tempfile::tempdir().unwrap();
        write_corpus(corpus.path(), 2, 64, 5).unwrap();
        let out = tempfile::tempdir().unwrap();
        let m = generate_synthetic(corpus.path(), out.path(), SyntheticOptions::new(4, 32, 2)).unwrap();
        for e in &m.entries {
            let raw = m.load_raw(e).unwrap();
            let rgb = m.load_rgb(e).unwrap().unwrap();
            // Gamma 2.2 against the sRGB curve with no white balance.
            let dev = develop(&raw, WhiteBalance::Camera { gains: [1.0; 3] }, None).unwrap();
            assert!(psnr(&dev, &rgb).unwrap() >= 20.0);
        }
    }

    #[test]
    fn undersized_corpus_is_an_error() {
        let corpus = tempfile::tempdir().unwrap();
        write_corpus(corpus.path(), 1, 16, 0).unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(generate_synthetic(corpus.path(), out.path(), SyntheticOptions::new(1, 32, 0)).is_err());
    }
}
