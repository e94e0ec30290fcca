//! Training-time augmentation: flips, color jitter, random affine and
//! Gaussian blur, applied in that fixed order.

use serde::{Deserialize, Serialize};

use crate::data::image::Image;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugConfig {
    pub hflip_p: f64,
    pub vflip_p: f64,
    /// Factors are drawn from `[1 − v, 1 + v]`.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift drawn from `[−v, v]` of a full turn.
    pub hue: f64,
    /// Rotation drawn from `[−v, v]` degrees.
    pub rotation_deg: f64,
    /// Maximum translation as a fraction of width and height.
    pub translate: [f64; 2],
    /// Horizontal shear drawn from `[−v, v]` degrees.
    pub shear_deg: f64,
    pub blur_p: f64,
    pub blur_kernel: usize,
    pub blur_sigma: [f64; 2],
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            hflip_p: 0.7,
            vflip_p: 0.3,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            hue: 0.1,
            rotation_deg: 20.0,
            translate: [0.1, 0.1],
            shear_deg: 10.0,
            blur_p: 1.0,
            blur_kernel: 13,
            blur_sigma: [0.1, 2.0],
        }
    }
}

impl AugConfig {
    /// Every operation disabled.
    pub fn identity() -> Self {
        Self {
            hflip_p: 0.0,
            vflip_p: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            rotation_deg: 0.0,
            translate: [0.0, 0.0],
            shear_deg: 0.0,
            blur_p: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("hflip_p", self.hflip_p), ("vflip_p", self.vflip_p), ("blur_p", self.blur_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("augment.{name} = {p} is not a probability")));
            }
        }
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("augment.{name} = {v} outside [0, 1]")));
            }
        }
        if !(0.0..=0.5).contains(&self.hue) {
            return Err(Error::config(format!("augment.hue = {} outside [0, 0.5]", self.hue)));
        }
        if self.rotation_deg < 0.0 || self.shear_deg < 0.0 || !(0.0..90.0).contains(&self.shear_deg) {
            return Err(Error::config("augment rotation and shear must be non-negative, shear below 90°"));
        }
        if self.translate.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("augment.translate fractions must lie in [0, 1]"));
        }
        if self.blur_kernel % 2 == 0 {
            return Err(Error::config(format!(
                "augment.blur_kernel must be odd, got {}",
                self.blur_kernel
            )));
        }
        let [lo, hi] = self.blur_sigma;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::config("augment.blur_sigma must satisfy 0 < min ≤ max"));
        }
        Ok(())
    }
}

// Child-stream labels, one per stage, so disabling a stage never shifts the
// draws of another.
const HFLIP: u64 = 0;
const VFLIP: u64 = 1;
const JITTER: u64 = 2;
const AFFINE: u64 = 3;
const BLUR: u64 = 4;

/// Applies the pipeline with draws taken from child streams of `rng`.
pub fn augment(img: &Image, cfg: &AugConfig, rng: &Rng) -> Image {
    let mut out = img.clone();
    if rng.child(&[HFLIP]).bernoulli(cfg.hflip_p) {
        out = hflip(&out);
    }
    if rng.child(&[VFLIP]).bernoulli(cfg.vflip_p) {
        out = vflip(&out);
    }

    let mut j = rng.child(&[JITTER]);
    let b = j.uniform_in(1.0 - cfg.brightness, 1.0 + cfg.brightness);
    let c = j.uniform_in(1.0 - cfg.contrast, 1.0 + cfg.contrast);
    let s = j.uniform_in(1.0 - cfg.saturation, 1.0 + cfg.saturation);
    let h = j.uniform_in(-cfg.hue, cfg.hue);
    if cfg.brightness > 0.0 {
        adjust_brightness(&mut out, b as f32);
    }
    if cfg.contrast > 0.0 {
        adjust_contrast(&mut out, c as f32);
    }
    if cfg.saturation > 0.0 {
        adjust_saturation(&mut out, s as f32);
    }
    if cfg.hue > 0.0 {
        adjust_hue(&mut out, h as f32);
    }

    if cfg.rotation_deg > 0.0 || cfg.shear_deg > 0.0 || cfg.translate != [0.0, 0.0] {
        let mut a = rng.child(&[AFFINE]);
        let params = AffineParams {
            rotation_deg: a.uniform_in(-cfg.rotation_deg, cfg.rotation_deg),
            translate: [
                a.uniform_in(-cfg.translate[0], cfg.translate[0]) * out.width() as f64,
                a.uniform_in(-cfg.translate[1], cfg.translate[1]) * out.height() as f64,
            ],
            shear_deg: a.uniform_in(-cfg.shear_deg, cfg.shear_deg),
        };
        out = affine(&out, &params);
    }

    let mut bl = rng.child(&[BLUR]);
    if bl.bernoulli(cfg.blur_p) {
        let sigma = bl.uniform_in(cfg.blur_sigma[0], cfg.blur_sigma[1]);
        out = gaussian_blur(&out, cfg.blur_kernel, sigma);
    }
    out
}

pub fn hflip(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(w, h, |x, y| img.pixel(w - 1 - x, y))
}

pub fn vflip(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(w, h, |x, y| img.pixel(x, h - 1 - y))
}

fn luma(p: &[f32]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn blend(img: &mut Image, factor: f32, toward: impl Fn(&[f32]) -> f32) {
    for px in img.data_mut().chunks_exact_mut(3) {
        let t = toward(px);
        for v in px.iter_mut() {
            *v = (factor * *v + (1.0 - factor) * t).clamp(0.0, 1.0);
        }
    }
}

pub fn adjust_brightness(img: &mut Image, factor: f32) {
    blend(img, factor, |_| 0.0);
}

/// Blends toward the mean luma of the whole image.
pub fn adjust_contrast(img: &mut Image, factor: f32) {
    let n = (img.width() * img.height()) as f64;
    let mean = (img.data().chunks_exact(3).map(|p| f64::from(luma(p))).sum::<f64>() / n) as f32;
    blend(img, factor, |_| mean);
}

/// Blends toward each pixel's own luma.
pub fn adjust_saturation(img: &mut Image, factor: f32) {
    blend(img, factor, luma);
}

/// Rotates hue by `shift` turns in HSV space.
pub fn adjust_hue(img: &mut Image, shift: f32) {
    for px in img.data_mut().chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (r, g, b) = hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
        px[0] = r;
        px[1] = g;
        px[2] = b;
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    /// Pixels along x and y.
    pub translate: [f64; 2],
    pub shear_deg: f64,
}

/// Rotation and horizontal shear about the image center, then translation.
/// Bilinear sampling; samples outside the source read as zero.
pub fn affine(img: &Image, p: &AffineParams) -> Image {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
    let sh = p.shear_deg.to_radians().tan();
    // forward M = R · [[1, sh], [0, 1]]
    let m = [[cos, cos * sh - sin], [sin, sin * sh + cos]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    let sample = |x: f64, y: f64, c: usize| -> f32 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let mut acc = 0.0;
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let weight = wx * wy;
                if weight == 0.0 {
                    continue;
                }
                let (sx, sy) = (x0 + dx, y0 + dy);
                if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 {
                    acc += weight * f64::from(img.pixel(sx as usize, sy as usize)[c]);
                }
            }
        }
        acc as f32
    };
    Image::from_fn(w, h, |x, y| {
        let dx = x as f64 - cx - p.translate[0];
        let dy = y as f64 - cy - p.translate[1];
        let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
        let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
        [sample(sx, sy, 0), sample(sx, sy, 1), sample(sx, sy, 2)]
    })
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with edge-replicating borders.
pub fn gaussian_blur(img: &Image, size: usize, sigma: f64) -> Image {
    let k = gaussian_kernel(size, sigma);
    let half = (size / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let pass = |src: &Image, horizontal: bool| {
        Image::from_fn(src.width(), src.height(), |x, y| {
            let mut acc = [0.0f64; 3];
            for (t, &kv) in k.iter().enumerate() {
                let o = t as isize - half;
                let (sx, sy) = if horizontal {
                    ((x as isize + o).clamp(0, w - 1), y as isize)
                } else {
                    (x as isize, (y as isize + o).clamp(0, h - 1))
                };
                let p = src.pixel(sx as usize, sy as usize);
                for c in 0..3 {
                    acc[c] += kv * f64::from(p[c]);
                }
            }
            acc.map(|v| v as f32)
        })
    };
    pass(&pass(img, true), false)
}
