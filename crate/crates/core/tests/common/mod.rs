//! Synthetic dataset fixtures shared by integration tests.
#![allow(dead_code)]

use std::f32::consts::PI;
use std::path::Path;

use cookcnn::data::CLASS_NAMES;

/// One RGB pattern per (class, instance): a class-specific base color with
/// oriented stripes whose frequency and angle also depend on the class.
pub fn pattern(class: usize, instance: usize, size: u32) -> image::RgbImage {
    let hue = class as f32 / CLASS_NAMES.len() as f32;
    let base = [
        0.5 + 0.4 * (2.0 * PI * hue).cos(),
        0.5 + 0.4 * (2.0 * PI * (hue + 1.0 / 3.0)).cos(),
        0.5 + 0.4 * (2.0 * PI * (hue + 2.0 / 3.0)).cos(),
    ];
    let angle = PI * class as f32 / CLASS_NAMES.len() as f32;
    let freq = 2.0 + (class % 4) as f32 * 3.0;
    let phase = instance as f32 * 0.9;
    let (s, c) = angle.sin_cos();
    image::RgbImage::from_fn(size, size, |x, y| {
        let u = (x as f32 * c + y as f32 * s) / size as f32;
        let stripe = (2.0 * PI * freq * u + phase).sin() * 0.25;
        let px = base.map(|b| ((b + stripe) * 255.0).clamp(0.0, 255.0) as u8);
        image::Rgb(px)
    })
}

/// Writes `per_class` images per class into both `train/` and `valid/`.
pub fn write_dataset(root: &Path, per_class: usize, size: u32) {
    for split in ["train", "valid"] {
        for (k, name) in CLASS_NAMES.iter().enumerate() {
            let dir = root.join(split).join(name);
            std::fs::create_dir_all(&dir).unwrap();
            for j in 0..per_class {
                pattern(k, j, size).save(dir.join(format!("{j}.png"))).unwrap();
            }
        }
    }
}
