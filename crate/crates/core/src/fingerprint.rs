//! Frequency-domain fingerprints: 2-D DFTs, averaged log-magnitude spectra
//! per image source, rendering and a spectrum distance.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, RgbImage};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::Origin;
use crate::error::{Error, Result};
use crate::raster::{luminance, resize, Matrix};

/// Complex 2-D spectrum, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.cols + v]
    }

    pub fn magnitude(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }
}

/// Unnormalized forward transform
/// `X[u,v] = Σ x[m,n] · exp(-2πi (um/H + vn/W))`, computed as row FFTs
/// followed by column FFTs.
pub fn dft2(image: &Matrix) -> Result<Spectrum> {
    let (h, w) = image.shape();
    if h == 0 || w == 0 || image.data.len() != h * w {
        return Err(Error::EmptyImage);
    }
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut data: Vec<Complex64> = image.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col_fft.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
    Ok(Spectrum { rows: h, cols: w, data })
}

/// Moves the zero frequency to `(H/2, W/2)` (integer division).
pub fn center_shift(m: &Matrix) -> Matrix {
    shift_by(m, m.rows / 2, m.cols / 2)
}

/// Inverse of [`center_shift`] for any size.
pub fn uncenter_shift(m: &Matrix) -> Matrix {
    shift_by(m, m.rows - m.rows / 2, m.cols - m.cols / 2)
}

fn shift_by(m: &Matrix, dr: usize, dc: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        for c in 0..m.cols {
            out.set((r + dr) % m.rows, (c + dc) % m.cols, m.get(r, c));
        }
    }
    out
}

/// Running sum of raw (uncentered, pre-log) DFT magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAccumulator {
    rows: usize,
    cols: usize,
    sum: Vec<f64>,
    count: usize,
}

impl SpectrumAccumulator {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            sum: vec![0.0; rows * cols],
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        if shape != (self.rows, self.cols) {
            return Err(Error::MixedResolutions {
                first: (self.rows, self.cols),
                other: shape,
            });
        }
        Ok(())
    }

    pub fn add_magnitude(&mut self, magnitude: &Matrix) -> Result<()> {
        self.check(magnitude.shape())?;
        for (s, m) in self.sum.iter_mut().zip(&magnitude.data) {
            *s += m;
        }
        self.count += 1;
        Ok(())
    }

    pub fn add(&mut self, image: &Matrix) -> Result<()> {
        self.check(image.shape())?;
        self.add_magnitude(&dft2(image)?.magnitude())
    }

    pub fn merge(&mut self, other: &SpectrumAccumulator) -> Result<()> {
        self.check((other.rows, other.cols))?;
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        self.count += other.count;
        Ok(())
    }

    /// Mean raw magnitude, uncentered and before log scaling.
    pub fn mean(&self) -> Result<Matrix> {
        if self.count == 0 {
            return Err(Error::EmptySequence);
        }
        let n = self.count as f64;
        Matrix::from_vec(self.rows, self.cols, self.sum.iter().map(|s| s / n).collect())
    }

    pub fn finish(&self, source: Origin) -> Result<SpectralFingerprint> {
        let mut mean = self.mean()?;
        mean.data.iter_mut().for_each(|v| *v = v.ln_1p());
        Ok(SpectralFingerprint {
            magnitude: center_shift(&mean),
            n_images: self.count,
            source,
        })
    }
}

/// Centered, `log1p`-scaled mean DFT magnitude over an image set.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFingerprint {
    pub magnitude: Matrix,
    pub n_images: usize,
    pub source: Origin,
}

#[derive(Serialize, Deserialize)]
struct FingerprintFile {
    source: Origin,
    n_images: usize,
    height: usize,
    width: usize,
    magnitudes: Vec<f64>,
}

impl SpectralFingerprint {
    pub fn resolution(&self) -> (usize, usize) {
        self.magnitude.shape()
    }

    pub fn to_json(&self) -> String {
        let file = FingerprintFile {
            source: self.source.clone(),
            n_images: self.n_images,
            height: self.magnitude.rows,
            width: self.magnitude.cols,
            magnitudes: self.magnitude.data.clone(),
        };
        serde_json::to_string(&file).expect("fingerprint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: FingerprintFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if f.n_images == 0 {
            return Err(Error::Format("fingerprint with zero images".into()));
        }
        Ok(Self {
            magnitude: Matrix::from_vec(f.height, f.width, f.magnitudes)?,
            n_images: f.n_images,
            source: f.source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::UnwritablePath {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// `log1p((1/n) Σ |DFT(gᵢ)|)`, center-shifted.
pub fn average_spectrum(images: &[Matrix], source: Origin) -> Result<SpectralFingerprint> {
    let first = images.first().ok_or(Error::EmptySequence)?;
    let mut acc = SpectrumAccumulator::new(first.rows, first.cols);
    // Magnitudes are computed in parallel per chunk and summed in input order
    // so the result does not depend on scheduling.
    for chunk in images.chunks(64) {
        let mags: Vec<Matrix> = chunk
            .par_iter()
            .map(|img| {
                if img.shape() != first.shape() {
                    return Err(Error::MixedResolutions {
                        first: first.shape(),
                        other: img.shape(),
                    });
                }
                Ok(dft2(img)?.magnitude())
            })
            .collect::<Result<_>>()?;
        for m in &mags {
            acc.add_magnitude(m)?;
        }
    }
    acc.finish(source)
}

/// Grayscale conversion (and optional bilinear resize) of RGB images before
/// [`average_spectrum`].
pub fn average_spectrum_rgb(
    images: &[RgbImage],
    source: Origin,
    size: Option<(u32, u32)>,
) -> Result<SpectralFingerprint> {
    let gray: Vec<Matrix> = images
        .iter()
        .map(|img| match size {
            Some((w, h)) => luminance(&resize(img, w, h)),
            None => luminance(img),
        })
        .collect();
    average_spectrum(&gray, source)
}

/// Root-mean-square difference of two fingerprints' magnitudes.
pub fn fingerprint_distance(a: &SpectralFingerprint, b: &SpectralFingerprint) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::ResolutionMismatch {
            left: a.resolution(),
            right: b.resolution(),
        });
    }
    let n = a.magnitude.data.len() as f64;
    let sq: f64 = a
        .magnitude
        .data
        .iter()
        .zip(&b.magnitude.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sq / n).sqrt())
}

/// Min-max normalizes to 0..=255. A constant fingerprint has no range and
/// maps to 0 everywhere.
pub fn spectrum_to_gray(fp: &SpectralFingerprint) -> GrayImage {
    let m = &fp.magnitude;
    let (lo, hi) = m.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    let range = hi - lo;
    GrayImage::from_fn(m.cols as u32, m.rows as u32, |x, y| {
        let v = m.get(y as usize, x as usize);
        let level = if range > 0.0 {
            ((v - lo) / range * 255.0).round()
        } else {
            0.0
        };
        Luma([level as u8])
    })
}

pub fn render_spectrum(fp: &SpectralFingerprint, path: &Path) -> Result<()> {
    spectrum_to_gray(fp).save(path).map_err(|e| Error::UnwritablePath {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
