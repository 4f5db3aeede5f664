//! Image decoding and the pixel-level preprocessing shared by the pipelines.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;

use crate::error::{Error, Result};
use crate::nn::Volume;

/// Reads any supported image file and converts it to 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| Error::UndecodableImage(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::UndecodableImage(e.to_string()))?;
    Ok(img.to_rgb8())
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, scaled to [0, 1].
pub fn luminance(img: &RgbImage) -> Matrix {
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    Matrix {
        rows: h as usize,
        cols: w as usize,
        data,
    }
}

/// Bilinear resize; returns a clone when the size already matches.
pub fn resize(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    if img.dimensions() == (width, height) {
        return img.clone();
    }
    imageops::resize(img, width, height, FilterType::Triangle)
}

/// Resizes to `size`×`size` and scales every channel to [0, 1], channel-major.
pub fn to_volume(img: &RgbImage, size: usize) -> Volume {
    let resized = resize(img, size as u32, size as u32);
    let mut vol = Volume::zeros(3, size, size);
    for (x, y, p) in resized.enumerate_pixels() {
        for c in 0..3 {
            vol.set(c, y as usize, x as usize, p[c] as f64 / 255.0);
        }
    }
    vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn luminance_weights() {
        let img = RgbImage::from_pixel(2, 1, Rgb([255, 0, 0]));
        let m = luminance(&img);
        assert_eq!(m.shape(), (1, 2));
        assert!((m.get(0, 1) - 0.299).abs() < 1e-12);
        let white = luminance(&RgbImage::from_pixel(1, 1, Rgb([255, 255, 255])));
        assert!((white.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resize_accepts_both_corpus_resolutions() {
        for side in [256u32, 512] {
            let img = RgbImage::from_pixel(side, side, Rgb([10, 20, 30]));
            let vol = to_volume(&img, 16);
            assert_eq!((vol.channels, vol.height, vol.width), (3, 16, 16));
            assert!((vol.get(2, 7, 7) - 30.0 / 255.0).abs() < 1e-9);
        }
    }

    #[test]
    fn garbage_bytes_are_undecodable() {
        assert!(matches!(decode_rgb(b"not an image"), Err(Error::UndecodableImage(_))));
    }
}
