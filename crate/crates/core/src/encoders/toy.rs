use image::RgbImage;

use super::EncoderBackend;
use crate::error::Result;
use crate::raster::luminance;

pub const TOY_IMAGE_DIM: usize = 10;
pub const TOY_TEXT_DIM: usize = 16;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic stand-in for a pretrained joint encoder.
///
/// Image features, each in [0, 1]:
///
/// | slot | feature |
/// |------|---------|
/// | 0-2  | per-channel mean / 255 |
/// | 3-5  | per-channel population std / 127.5 |
/// | 6    | mean vertical luminance step (next row minus row), mapped `(g + 1) / 2` |
/// | 7    | mean horizontal luminance step (next column minus column), mapped `(g + 1) / 2` |
/// | 8    | mean absolute vertical step |
/// | 9    | mean absolute horizontal step |
///
/// Text features are a 16-slot hashed bag of words: lowercased whitespace
/// tokens, FNV-1a modulo 16, counts scaled to unit length.
///
/// The joint variant zero-pads image features to 16 slots so image and text
/// embeddings share a space and can be compared by cosine similarity.
#[derive(Debug, Clone)]
pub struct ToyBackend {
    id: &'static str,
    joint: bool,
    caption: bool,
}

impl Default for ToyBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyBackend {
    pub fn new() -> Self {
        Self {
            id: "toy",
            joint: false,
            caption: true,
        }
    }

    pub fn joint() -> Self {
        Self {
            id: "toy-joint",
            joint: true,
            caption: true,
        }
    }

    /// Same encoders with captioning switched off.
    pub fn without_captioner(mut self) -> Self {
        self.caption = false;
        self
    }

    pub fn image_features(image: &RgbImage) -> [f64; TOY_IMAGE_DIM] {
        let n = (image.width() * image.height()) as f64;
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for p in image.pixels() {
            for c in 0..3 {
                let v = p[c] as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        let mut f = [0.0; TOY_IMAGE_DIM];
        for c in 0..3 {
            let mean = sum[c] / n;
            f[c] = mean;
            f[3 + c] = 2.0 * (sq[c] / n - mean * mean).max(0.0).sqrt();
        }

        let lum = luminance(image);
        let (mut dv, mut adv, mut nv) = (0.0, 0.0, 0usize);
        let (mut dh, mut adh, mut nh) = (0.0, 0.0, 0usize);
        for r in 0..lum.rows {
            for c in 0..lum.cols {
                if r + 1 < lum.rows {
                    let g = lum.get(r + 1, c) - lum.get(r, c);
                    dv += g;
                    adv += g.abs();
                    nv += 1;
                }
                if c + 1 < lum.cols {
                    let g = lum.get(r, c + 1) - lum.get(r, c);
                    dh += g;
                    adh += g.abs();
                    nh += 1;
                }
            }
        }
        let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
        f[6] = (mean(dv, nv) + 1.0) / 2.0;
        f[7] = (mean(dh, nh) + 1.0) / 2.0;
        f[8] = mean(adv, nv);
        f[9] = mean(adh, nh);
        f
    }

    pub fn text_features(prompt: &str) -> [f64; TOY_TEXT_DIM] {
        let mut counts = [0.0f64; TOY_TEXT_DIM];
        for token in prompt.split_whitespace() {
            let token = token.to_lowercase();
            counts[(fnv1a64(token.as_bytes()) % TOY_TEXT_DIM as u64) as usize] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            counts.iter_mut().for_each(|c| *c /= norm);
        }
        counts
    }

    /// `image with mean rgb (r,g,b)` with channel means rounded to integers.
    pub fn caption_for(image: &RgbImage) -> String {
        let n = (image.width() * image.height()) as f64;
        let mut sum = [0.0f64; 3];
        for p in image.pixels() {
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
        }
        let [r, g, b] = sum.map(|s| (s / n).round() as u32);
        format!("image with mean rgb ({r},{g},{b})")
    }
}

impl EncoderBackend for ToyBackend {
    fn backend_id(&self) -> &str {
        self.id
    }

    fn image_dim(&self) -> usize {
        if self.joint {
            TOY_TEXT_DIM
        } else {
            TOY_IMAGE_DIM
        }
    }

    fn text_dim(&self) -> usize {
        TOY_TEXT_DIM
    }

    fn can_caption(&self) -> bool {
        self.caption
    }

    fn embed_image(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let mut v = Self::image_features(image).to_vec();
        v.resize(self.image_dim(), 0.0);
        Ok(v)
    }

    fn embed_text(&self, prompt: &str) -> Result<Vec<f64>> {
        Ok(Self::text_features(prompt).to_vec())
    }

    fn caption(&self, image: &RgbImage) -> Result<String> {
        Ok(Self::caption_for(image))
    }
}
