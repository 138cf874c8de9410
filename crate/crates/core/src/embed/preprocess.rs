use std::path::Path;

use image::imageops::{self, FilterType};
pub use image::RgbImage;

use super::backend::BackendSpec;
use crate::error::{Error, Result};

/// A normalized `3 × S × S` image in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    size: usize,
    data: Vec<f32>,
}

impl FrameTensor {
    pub fn zeros(size: usize) -> Self {
        FrameTensor {
            size,
            data: vec![0.0; 3 * size * size],
        }
    }

    pub fn from_chw(size: usize, data: Vec<f32>) -> Result<Self> {
        if size == 0 || data.len() != 3 * size * size {
            return Err(Error::contract(format!(
                "a {size}x{size} tensor needs {} values, got {}",
                3 * size * size,
                data.len()
            )));
        }
        Ok(FrameTensor { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.size + row) * self.size + col]
    }
}

pub fn load_frame(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    Ok(decoded.to_rgb8())
}

/// Output size of resizing the shorter side to `s`, long side truncated.
fn resized_dims(w: u32, h: u32, s: u32) -> (u32, u32) {
    if w <= h {
        (s, (u64::from(h) * u64::from(s) / u64::from(w)) as u32)
    } else {
        ((u64::from(w) * u64::from(s) / u64::from(h)) as u32, s)
    }
}

/// Bicubic resize of the shorter side to `image_size`, center crop, then
/// `(x / 255 − mean) / std` per channel.
///
/// An image whose shorter side already equals `image_size` is cropped without
/// resampling.
pub fn preprocess_frame(image: &RgbImage, spec: &BackendSpec) -> Result<FrameTensor> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::domain(format!("cannot preprocess a {w}x{h} image")));
    }
    let s = spec.image_size;
    let resized;
    let source = if w.min(h) == s {
        image
    } else {
        let (nw, nh) = resized_dims(w, h, s);
        resized = imageops::resize(image, nw, nh, FilterType::CatmullRom);
        &resized
    };
    let (w, h) = source.dimensions();
    let left = (w - s) / 2;
    let top = (h - s) / 2;

    let mean = spec.pixel_mean.map(|m| m as f32);
    let std = spec.pixel_std.map(|v| v as f32);
    let s = s as usize;
    let mut data = vec![0.0f32; 3 * s * s];
    for row in 0..s {
        for col in 0..s {
            let px = source.get_pixel(left + col as u32, top + row as u32);
            for c in 0..3 {
                data[(c * s + row) * s + col] = (f32::from(px[c]) / 255.0 - mean[c]) / std[c];
            }
        }
    }
    Ok(FrameTensor { size: s, data })
}
