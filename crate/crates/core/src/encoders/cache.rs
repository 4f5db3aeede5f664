use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use image::RgbImage;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{EmbeddingKind, EmbeddingVector, EncoderBackend};
use crate::error::{Error, Result};

/// One cache line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CacheRecord {
    pub id: String,
    pub kind: EmbeddingKind,
    pub backend_id: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Line-delimited embedding store keyed by `(kind, id)`.
///
/// Values are written in scientific notation with nine fractional digits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: BTreeMap<(EmbeddingKind, String), EmbeddingVector>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: EmbeddingVector) {
        self.entries.insert((vector.kind(), id.into()), vector);
    }

    pub fn get(&self, kind: EmbeddingKind, id: &str) -> Option<&EmbeddingVector> {
        self.entries.get(&(kind, id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|((_, id), v)| (id.as_str(), v))
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for ((kind, id), v) in &self.entries {
            let kind = serde_json::to_string(kind).expect("kind serializes");
            let _ = write!(
                out,
                "{{\"id\":{},\"kind\":{},\"backend_id\":{},\"dim\":{},\"values\":[",
                serde_json::to_string(id).expect("string serializes"),
                kind,
                serde_json::to_string(v.backend_id()).expect("string serializes"),
                v.dim()
            );
            for (i, x) in v.values().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", stored(*x));
            }
            out.push_str("]}\n");
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut cache = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if rec.values.len() != rec.dim {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    reason: format!("dim {} but {} values", rec.dim, rec.values.len()),
                });
            }
            let v = EmbeddingVector::new(rec.values, rec.kind, rec.backend_id)?;
            cache.insert(rec.id, v);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_lines()).map_err(|e| Error::io(path, e))
    }

    /// Reads a cache file; a missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(&text)
    }
}

/// Wraps a backend with a content-addressed embedding cache.
///
/// Embeddings are rounded to the cache file's precision on first use, so
/// results do not depend on whether the cache was warm. Images are keyed by a digest of their dimensions and pixel bytes, prompts
/// by a digest of their text, so the cache is transparent to callers.
pub struct CachedBackend<B> {
    inner: B,
    cache: Mutex<EmbeddingCache>,
}

impl<B: EncoderBackend> CachedBackend<B> {
    pub fn new(inner: B) -> Self {
        Self::with_cache(inner, EmbeddingCache::new())
    }

    /// Entries from other backends are dropped.
    pub fn with_cache(inner: B, cache: EmbeddingCache) -> Self {
        let mut own = EmbeddingCache::new();
        for (id, v) in cache.iter() {
            if v.backend_id() == inner.backend_id() {
                own.insert(id, v.clone());
            }
        }
        Self {
            inner,
            cache: Mutex::new(own),
        }
    }

    pub fn snapshot(&self) -> EmbeddingCache {
        self.cache.lock().expect("cache lock").clone()
    }

    fn lookup_or<F>(&self, kind: EmbeddingKind, key: String, compute: F) -> Result<Vec<f64>>
    where
        F: FnOnce() -> Result<Vec<f64>>,
    {
        if let Some(v) = self.cache.lock().expect("cache lock").get(kind, &key) {
            return Ok(v.values().to_vec());
        }
        let values: Vec<f64> = compute()?.into_iter().map(quantize).collect();
        let vector = EmbeddingVector::new(values.clone(), kind, self.inner.backend_id())?;
        self.cache.lock().expect("cache lock").insert(key, vector);
        Ok(values)
    }
}

/// Decimal form written to cache files: ten significant digits.
fn stored(x: f64) -> String {
    format!("{x:.9e}")
}

/// Value a cache file hands back for `x`. Fresh embeddings go through the
/// same rounding so cache hits and misses are indistinguishable.
fn quantize(x: f64) -> f64 {
    stored(x).parse().expect("formatted float parses")
}

fn image_key(image: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.as_raw());
    format!("img:{}", hex::encode(h.finalize()))
}

fn text_key(prompt: &str) -> String {
    format!("txt:{}", hex::encode(Sha256::digest(prompt.as_bytes())))
}

impl<B: EncoderBackend> EncoderBackend for CachedBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn image_dim(&self) -> usize {
        self.inner.image_dim()
    }

    fn text_dim(&self) -> usize {
        self.inner.text_dim()
    }

    fn can_caption(&self) -> bool {
        self.inner.can_caption()
    }

    fn embed_image(&self, image: &RgbImage) -> Result<Vec<f64>> {
        self.lookup_or(EmbeddingKind::Image, image_key(image), || self.inner.embed_image(image))
    }

    fn embed_text(&self, prompt: &str) -> Result<Vec<f64>> {
        self.lookup_or(EmbeddingKind::Text, text_key(prompt), || self.inner.embed_text(prompt))
    }

    fn caption(&self, image: &RgbImage) -> Result<String> {
        self.inner.caption(image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{encode_image, encode_text, ToyBackend};
    use image::Rgb;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_within_relative_tolerance(
            values in prop::collection::vec(-1e6f64..1e6, 1..24),
            id in "[a-z0-9:_-]{1,12}",
        ) {
            let mut cache = EmbeddingCache::new();
            cache.insert(id.clone(), EmbeddingVector::new(values.clone(), EmbeddingKind::Text, "toy").unwrap());
            let back = EmbeddingCache::from_lines(&cache.to_lines()).unwrap();
            let v = back.get(EmbeddingKind::Text, &id).unwrap();
            prop_assert_eq!(v.backend_id(), "toy");
            for (a, b) in values.iter().zip(v.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn dim_disagreement_is_malformed() {
        let line = r#"{"id":"x","kind":"image","backend_id":"toy","dim":3,"values":[1.0]}"#;
        assert!(matches!(
            EmbeddingCache::from_lines(line),
            Err(Error::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn warm_and_cold_caches_agree() {
        let cached = CachedBackend::new(ToyBackend::new());
        let img = RgbImage::from_fn(3, 3, |x, y| Rgb([(x * 50) as u8, (y * 80) as u8, 7]));
        let cold = encode_image(&cached, &img).unwrap();
        let raw = encode_image(&ToyBackend::new(), &img).unwrap();
        for (a, b) in cold.values().iter().zip(raw.values()) {
            assert!((a - b).abs() <= 1e-9 * b.abs());
        }
        encode_text(&cached, "a dog").unwrap();
        assert_eq!(cached.snapshot().len(), 2);
        assert_eq!(encode_image(&cached, &img).unwrap(), cold);

        let from_disk = EmbeddingCache::from_lines(&cached.snapshot().to_lines()).unwrap();
        let warm = CachedBackend::with_cache(ToyBackend::new(), from_disk);
        assert_eq!(encode_image(&warm, &img).unwrap(), cold);

        let reloaded = CachedBackend::with_cache(ToyBackend::joint(), cached.snapshot());
        assert!(reloaded.snapshot().is_empty());
    }
}
