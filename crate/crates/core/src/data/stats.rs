//! Per-channel normalization statistics over a split.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::image::{load_image, resize_center_crop, Image};
use crate::data::manifest::{Manifest, Split};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: u64,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl Moments {
    fn add_image(mut self, img: &Image) -> Self {
        for px in img.data().chunks_exact(3) {
            for c in 0..3 {
                let v = f64::from(px[c]);
                self.sum[c] += v;
                self.sum_sq[c] += v * v;
            }
        }
        self.n += (img.width() * img.height()) as u64;
        self
    }

    fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        for c in 0..3 {
            self.sum[c] += o.sum[c];
            self.sum_sq[c] += o.sum_sq[c];
        }
        self
    }

    fn finish(self) -> Stats {
        let n = self.n as f64;
        let mean = self.sum.map(|s| s / n);
        let mut std = [0.0; 3];
        for c in 0..3 {
            std[c] = (self.sum_sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt();
        }
        Stats { mean, std }
    }
}

/// Population mean and standard deviation of every pixel in `images`.
pub fn stats_of_images<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<Stats> {
    let m = images
        .into_iter()
        .fold(Moments::default(), |m, img| m.add_image(img));
    if m.n == 0 {
        return Err(Error::data("cannot compute statistics of zero images"));
    }
    Ok(m.finish())
}

/// Statistics of `split` after the resize / center-crop step.
pub fn compute_stats(manifest: &Manifest, split: Split, resize: usize, crop: usize) -> Result<Stats> {
    let records = manifest.split(split);
    if records.is_empty() {
        return Err(Error::data(format!("the {split} split has no images")));
    }
    // Per-image partials are merged in record order so the result does not
    // depend on the thread count.
    let partials: Vec<Moments> = records
        .par_iter()
        .map(|r| {
            let img = resize_center_crop(&load_image(&r.path)?, resize, crop)?;
            Ok(Moments::default().add_image(&img))
        })
        .collect::<Result<_>>()?;
    Ok(partials
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .finish())
}

impl Stats {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stats serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("stats file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
