//! Deterministic batching: seeded shuffles, per-sample augmentation streams
//! and order-preserving parallel loading.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::augment::{augment, AugConfig};
use crate::data::image::{load_image, normalize, resize_center_crop, Image};
use crate::data::manifest::Record;
use crate::data::stats::Stats;
use crate::error::{Error, Result};
use crate::rng::{purpose, Rng};
use crate::tensor::Tensor;

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// The fixed (non-random) part of the input pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    pub resize: usize,
    pub crop: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Preprocess {
    pub fn new(resize: usize, crop: usize, stats: Stats) -> Self {
        Self {
            resize,
            crop,
            mean: stats.mean,
            std: stats.std,
        }
    }

    pub fn stats(&self) -> Stats {
        Stats {
            mean: self.mean,
            std: self.std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > self.resize {
            return Err(Error::config(format!(
                "crop {} must be positive and at most resize {}",
                self.crop, self.resize
            )));
        }
        if let Some(c) = self.std.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::config(format!(
                "normalization std for channel {c} is {}; override the statistics in the config",
                self.std[c]
            )));
        }
        Ok(())
    }

    /// Decode-free path: resize, crop, normalize.
    pub fn apply(&self, img: &Image) -> Result<Tensor<f32>> {
        normalize(&resize_center_crop(img, self.resize, self.crop)?, self.mean, self.std)
    }
}

/// A stacked `[N, 3, H, W]` batch and the dataset indices it came from.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Splits `0..n` into batches, shuffled with a stream derived from
/// `(seed, epoch)` when `shuffle` is set. The last batch may be short.
pub fn batch_plan(n: usize, batch_size: usize, shuffle: bool, rng: &Rng, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        rng.child(&[purpose::SHUFFLE, epoch as u64]).shuffle(&mut order);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Records plus the preprocessing they go through. With `cache` set the
/// resized and cropped images are held in memory after the first load.
pub struct Dataset {
    records: Vec<Record>,
    preprocess: Preprocess,
    augment: Option<AugConfig>,
    cache: Option<Vec<Image>>,
}

impl Dataset {
    pub fn new(records: Vec<Record>, preprocess: Preprocess, augment: Option<AugConfig>) -> Result<Self> {
        preprocess.validate()?;
        if let Some(a) = &augment {
            a.validate()?;
        }
        Ok(Self {
            records,
            preprocess,
            augment,
            cache: None,
        })
    }

    /// Decodes and crops every image once, up front.
    pub fn preload(&mut self) -> Result<()> {
        let images = self
            .records
            .par_iter()
            .map(|r| self.load_cropped(r))
            .collect::<Result<Vec<_>>>()?;
        self.cache = Some(images);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn preprocess(&self) -> &Preprocess {
        &self.preprocess
    }

    fn load_cropped(&self, r: &Record) -> Result<Image> {
        resize_center_crop(&load_image(&r.path)?, self.preprocess.resize, self.preprocess.crop)
    }

    /// The network input for sample `index` in `epoch`.
    pub fn sample(&self, index: usize, rng: &Rng, epoch: usize) -> Result<Tensor<f32>> {
        let owned;
        let img = match &self.cache {
            Some(c) => &c[index],
            None => {
                owned = self.load_cropped(&self.records[index])?;
                &owned
            }
        };
        let p = &self.preprocess;
        match &self.augment {
            Some(cfg) => {
                let stream = rng.child(&[purpose::AUGMENT, epoch as u64, index as u64]);
                normalize(&augment(img, cfg, &stream), p.mean, p.std)
            }
            None => normalize(img, p.mean, p.std),
        }
    }

    /// Loads `indices` in parallel and stacks them in the given order.
    pub fn batch(&self, indices: &[usize], rng: &Rng, epoch: usize) -> Result<SampleBatch> {
        if indices.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let samples = indices
            .par_iter()
            .map(|&i| self.sample(i, rng, epoch))
            .collect::<Result<Vec<_>>>()?;
        let per = samples[0].len();
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(samples[0].shape());
        let mut data = Vec::with_capacity(per * indices.len());
        for s in &samples {
            data.extend_from_slice(s.data());
        }
        Ok(SampleBatch {
            inputs: Tensor::new(&shape, data)?,
            labels: indices.iter().map(|&i| self.records[i].label).collect(),
            indices: indices.to_vec(),
        })
    }

    /// Every batch of one epoch, in plan order.
    pub fn batches(&self, batch_size: usize, shuffle: bool, rng: &Rng, epoch: usize) -> Result<Vec<SampleBatch>> {
        batch_plan(self.len(), batch_size, shuffle, rng, epoch)?
            .iter()
            .map(|b| self.batch(b, rng, epoch))
            .collect()
    }
}
