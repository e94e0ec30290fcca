//! RGB float images and the resize / center-crop / normalize chain.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interleaved RGB, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::data("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::data(format!(
                "{width}×{height} RGB image needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| f32::from(b) / 255.0).collect(),
        }
    }
}

/// Decodes PNG or JPEG bytes. Grayscale is replicated to three channels and
/// alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let dynamic = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        message: e.to_string(),
        offset: None,
    })?;
    let rgb = dynamic.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(Error::Decode {
            message: "image has zero size".into(),
            offset: None,
        });
    }
    Ok(Image::from_rgb8(&rgb))
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode { message, offset } => Error::Decode {
            message: format!("{}: {message}", path.display()),
            offset,
        },
        other => other,
    })
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    if width == img.width && height == img.height {
        return img.clone();
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let coords = |o: usize, scale: f64, len: usize| {
        let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..width).map(|x| coords(x, sx, img.width)).collect();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let (y0, y1, fy) = coords(y, sy, img.height);
        for &(x0, x1, fx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p01 = img.pixel(x1, y0);
            let p10 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..3 {
                let top = p00[c] + (p01[c] - p00[c]) * fx;
                let bottom = p10[c] + (p11[c] - p10[c]) * fx;
                data.push(top + (bottom - top) * fy);
            }
        }
    }
    Image { width, height, data }
}

/// Top-left corner of a centered `crop × crop` window.
pub fn center_offset(width: usize, height: usize, crop: usize) -> (usize, usize) {
    ((width - crop) / 2, (height - crop) / 2)
}

pub fn crop(img: &Image, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
    if x0 + width > img.width || y0 + height > img.height {
        return Err(Error::data(format!(
            "crop {width}×{height} at ({x0}, {y0}) exceeds {}×{} image",
            img.width, img.height
        )));
    }
    let mut data = Vec::with_capacity(width * height * 3);
    for y in y0..y0 + height {
        let start = (y * img.width + x0) * 3;
        data.extend_from_slice(&img.data[start..start + width * 3]);
    }
    Ok(Image { width, height, data })
}

/// Scales the shorter side to `resize_to` (aspect preserved, longer side
/// truncated), then takes the central `crop_to × crop_to` window.
pub fn resize_center_crop(img: &Image, resize_to: usize, crop_to: usize) -> Result<Image> {
    if crop_to > resize_to || crop_to == 0 {
        return Err(Error::config(format!(
            "crop size {crop_to} must be positive and no larger than resize size {resize_to}"
        )));
    }
    let (w, h) = (img.width, img.height);
    let (nw, nh) = if w <= h {
        (resize_to, (resize_to * h / w).max(resize_to))
    } else {
        ((resize_to * w / h).max(resize_to), resize_to)
    };
    let resized = resize_bilinear(img, nw, nh);
    let (x0, y0) = center_offset(nw, nh, crop_to);
    crop(&resized, x0, y0, crop_to, crop_to)
}

/// `(img − mean) / std` per channel, converted to channel-major `[3, H, W]`.
pub fn normalize(img: &Image, mean: [f64; 3], std: [f64; 3]) -> Result<Tensor<f32>> {
    if let Some(c) = std.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::config(format!(
            "normalization std for channel {c} is {}; override the statistics in the config",
            std[c]
        )));
    }
    let plane = img.width * img.height;
    let mut out = vec![0.0f32; 3 * plane];
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = ((f64::from(px[c]) - mean[c]) / std[c]) as f32;
        }
    }
    Tensor::new(&[3, img.height, img.width], out)
}

/// Inverse of [`normalize`].
pub fn unnormalize(t: &Tensor<f32>, mean: [f64; 3], std: [f64; 3]) -> Result<Image> {
    let [c, h, w]: [usize; 3] = t
        .shape()
        .try_into()
        .map_err(|_| Error::shape("expected a [3, H, W] tensor"))?;
    if c != 3 {
        return Err(Error::shape("expected 3 channels"));
    }
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for i in 0..plane {
        for ch in 0..3 {
            data[i * 3 + ch] = (f64::from(t.data()[ch * plane + i]) * std[ch] + mean[ch]) as f32;
        }
    }
    Image::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn encode(img: image::DynamicImage, format: image::ImageFormat) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, format).unwrap();
        buf.into_inner()
    }

    #[test]
    fn decodes_red_png() {
        let img = image::RgbImage::from_pixel(1, 1, image::Rgb([255, 0, 0]));
        let bytes = encode(img.into(), image::ImageFormat::Png);
        assert_eq!(decode_image(&bytes).unwrap().pixel(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn grayscale_replicates() {
        let img = image::GrayImage::from_pixel(2, 2, image::Luma([128]));
        let bytes = encode(img.into(), image::ImageFormat::Png);
        let px = decode_image(&bytes).unwrap().pixel(1, 1);
        for v in px {
            assert!((v - 128.0 / 255.0).abs() < 1e-6);
            assert!((v - 0.502).abs() < 1e-3);
        }
    }

    #[test]
    fn alpha_is_dropped() {
        let img = image::RgbaImage::from_pixel(1, 1, image::Rgba([0, 255, 0, 10]));
        let bytes = encode(img.into(), image::ImageFormat::Png);
        assert_eq!(decode_image(&bytes).unwrap().pixel(0, 0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn truncated_jpeg_fails() {
        let img = image::RgbImage::from_fn(32, 32, |x, y| image::Rgb([x as u8 * 8, y as u8 * 8, 0]));
        let bytes = encode(img.into(), image::ImageFormat::Jpeg);
        let err = decode_image(&bytes[..bytes.len() / 3]).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }));
    }

    #[test]
    fn square_256_crops_at_16() {
        assert_eq!(center_offset(256, 256, 224), (16, 16));
        let img = Image::from_fn(256, 256, |x, y| [x as f32 / 255.0, y as f32 / 255.0, 0.0]);
        let out = resize_center_crop(&img, 256, 224).unwrap();
        assert_eq!(out.pixel(0, 0), img.pixel(16, 16));
    }

    #[test]
    fn constant_survives_resize_and_crop() {
        let img = Image::filled(224, 224, [0.25, 0.5, 0.75]);
        let out = resize_center_crop(&img, 256, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        assert!(out.data().chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
    }

    #[test]
    fn shorter_side_rule() {
        let img = Image::from_fn(512, 256, |x, _| [x as f32 / 511.0, 0.0, 0.0]);
        let out = resize_center_crop(&img, 256, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        // shorter side already 256: the crop starts at x = (512 − 224) / 2
        assert_eq!(out.pixel(0, 0), img.pixel(144, 16));
        let tall = Image::filled(100, 300, [0.1, 0.2, 0.3]);
        let out = resize_center_crop(&tall, 256, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
    }

    #[test]
    fn normalize_layout_and_inverse() {
        let img = Image::from_fn(3, 2, |x, y| [x as f32 * 0.1, y as f32 * 0.2, 0.3]);
        let t = normalize(&img, [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(t.shape(), &[3, 2, 3]);
        assert_eq!(t.data()[2], 0.2f32);
        assert_eq!(t.data()[6 + 3], 0.2f32);

        let mean = [0.3, 0.4, 0.5];
        let std = [0.2, 0.25, 0.3];
        let t = normalize(&img, mean, std).unwrap();
        let back = unnormalize(&t, mean, std).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-6);
        }

        let flat = Image::filled(2, 2, [0.3, 0.4, 0.5]);
        assert!(normalize(&flat, mean, std).unwrap().data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn zero_std_is_config_error() {
        let img = Image::filled(2, 2, [0.5; 3]);
        assert!(matches!(normalize(&img, [0.5; 3], [1.0, 0.0, 1.0]), Err(Error::Config(_))));
    }
}
