use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rawmark_core::dataset::{DatasetManifest, Split};
use rawmark_core::{BayerRaw, RgbImage};
use tch::Tensor;

use crate::tensor::{raws_to_tensor, rgbs_to_tensor};
use crate::{Error, Result};

/// Equally indexed RAW mosaics and their ground-truth RGB renderings.
#[derive(Debug, Clone)]
pub struct PairedData {
    raws: Vec<BayerRaw>,
    rgbs: Vec<RgbImage>,
}

impl PairedData {
    pub fn new(raws: Vec<BayerRaw>, rgbs: Vec<RgbImage>) -> Result<Self> {
        if raws.len() != rgbs.len() {
            return Err(Error::Training(format!(
                "{} RAW images but {} RGB images",
                raws.len(),
                rgbs.len()
            )));
        }
        for (i, (r, c)) in raws.iter().zip(&rgbs).enumerate() {
            if (r.height(), r.width()) != (c.height(), c.width()) {
                return Err(Error::Training(format!(
                    "pair {i}: RAW {}x{} vs RGB {}x{}",
                    r.height(),
                    r.width(),
                    c.height(),
                    c.width()
                )));
            }
        }
        Ok(Self { raws, rgbs })
    }

    /// Every entry of `split` that has an RGB rendering.
    pub fn from_manifest(manifest: &DatasetManifest, split: Split) -> Result<Self> {
        let mut raws = Vec::new();
        let mut rgbs = Vec::new();
        for entry in manifest.split(split) {
            if let Some(rgb) = manifest.load_rgb(entry)? {
                raws.push(manifest.load_raw(entry)?);
                rgbs.push(rgb);
            }
        }
        Self::new(raws, rgbs)
    }

    pub fn len(&self) -> usize {
        self.raws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raws.is_empty()
    }

    pub fn raws(&self) -> &[BayerRaw] {
        &self.raws
    }

    pub fn rgbs(&self) -> &[RgbImage] {
        &self.rgbs
    }

    pub fn take(&self, n: usize) -> Self {
        Self {
            raws: self.raws.iter().take(n).cloned().collect(),
            rgbs: self.rgbs.iter().take(n).cloned().collect(),
        }
    }

    fn check_crop(&self, crop: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Training("dataset is empty".into()));
        }
        if let Some(r) = self.raws.iter().find(|r| r.height() < crop || r.width() < crop) {
            return Err(Error::Training(format!(
                "image {}x{} is smaller than the {crop} crop",
                r.height(),
                r.width()
            )));
        }
        Ok(())
    }

    /// One epoch of shuffled `(raw [B,1,S,S], rgb [B,3,S,S])` batches with
    /// random crops aligned to the Bayer grid. The last batch may be short.
    pub fn epoch(&self, crop: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(Tensor, Tensor)>> {
        self.check_crop(crop)?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let mut out = Vec::new();
        for chunk in order.chunks(batch.max(1)) {
            let mut raws = Vec::with_capacity(chunk.len());
            let mut rgbs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (r, c) = (&self.raws[i], &self.rgbs[i]);
                let top = 2 * rng.random_range(0..=(r.height() - crop) / 2);
                let left = 2 * rng.random_range(0..=(r.width() - crop) / 2);
                raws.push(r.crop(top, left, crop, crop)?);
                rgbs.push(c.crop(top, left, crop, crop)?);
            }
            out.push((
                raws_to_tensor(&raws.iter().collect::<Vec<_>>())?,
                rgbs_to_tensor(&rgbs.iter().collect::<Vec<_>>())?,
            ));
        }
        Ok(out)
    }

    /// Bayer-aligned centre crops in dataset order, for evaluation.
    pub fn center_crops(&self, crop: usize) -> Result<Vec<(BayerRaw, RgbImage)>> {
        self.check_crop(crop)?;
        self.raws
            .iter()
            .zip(&self.rgbs)
            .map(|(r, c)| {
                let top = (r.height() - crop) / 4 * 2;
                let left = (r.width() - crop) / 4 * 2;
                Ok((r.crop(top, left, crop, crop)?, c.crop(top, left, crop, crop)?))
            })
            .collect()
    }
}
