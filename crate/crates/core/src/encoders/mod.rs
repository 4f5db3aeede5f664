//! Pluggable image/text encoders and captioners.
//!
//! Pipelines only talk to [`EncoderBackend`]. Pretrained joint image-text
//! encoders or captioning models plug in by implementing it and passing
//! [`check_conformance`]; the crate ships [`ToyBackend`] for deterministic
//! desk-scale runs.

mod cache;
mod toy;

pub use cache::{CacheRecord, CachedBackend, EmbeddingCache};
pub use toy::{fnv1a64, ToyBackend, TOY_IMAGE_DIM, TOY_TEXT_DIM};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Image,
    Text,
    Concat,
}

/// A finite real vector tagged with its modality and producing backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    kind: EmbeddingKind,
    backend_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, kind: EmbeddingKind, backend_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::BadDimension("embedding must have at least one entry".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            values,
            kind,
            backend_id: backend_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    /// Unit-length copy; zero vectors are rejected.
    pub fn l2_normalized(&self) -> Result<Self> {
        let norm = l2_norm(&self.values);
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / norm).collect(),
            ..self.clone()
        })
    }
}

/// Image encoder, text encoder and optional captioner behind one interface.
///
/// Implementations must be deterministic for identical inputs and safe for
/// concurrent read-only use. `image_dim` and `text_dim` never change over a
/// backend's lifetime.
pub trait EncoderBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn image_dim(&self) -> usize;
    fn text_dim(&self) -> usize;

    fn can_caption(&self) -> bool {
        false
    }

    fn embed_image(&self, image: &RgbImage) -> Result<Vec<f64>>;

    /// Called only with non-empty prompts.
    fn embed_text(&self, prompt: &str) -> Result<Vec<f64>>;

    fn caption(&self, _image: &RgbImage) -> Result<String> {
        Err(Error::CaptionUnsupported(self.backend_id().to_string()))
    }
}

impl<T: EncoderBackend + ?Sized> EncoderBackend for Box<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn image_dim(&self) -> usize {
        (**self).image_dim()
    }

    fn text_dim(&self) -> usize {
        (**self).text_dim()
    }

    fn can_caption(&self) -> bool {
        (**self).can_caption()
    }

    fn embed_image(&self, image: &RgbImage) -> Result<Vec<f64>> {
        (**self).embed_image(image)
    }

    fn embed_text(&self, prompt: &str) -> Result<Vec<f64>> {
        (**self).embed_text(prompt)
    }

    fn caption(&self, image: &RgbImage) -> Result<String> {
        (**self).caption(image)
    }
}

fn checked(backend: &dyn EncoderBackend, values: Vec<f64>, kind: EmbeddingKind, dim: usize) -> Result<EmbeddingVector> {
    if values.len() != dim {
        return Err(Error::BackendFailure(format!(
            "{} produced {} values, declared {dim}",
            backend.backend_id(),
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::BackendFailure(format!(
            "{} produced non-finite values",
            backend.backend_id()
        )));
    }
    EmbeddingVector::new(values, kind, backend.backend_id())
}

pub fn encode_image(backend: &dyn EncoderBackend, image: &RgbImage) -> Result<EmbeddingVector> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::UndecodableImage("image has no pixels".into()));
    }
    let values = backend.embed_image(image)?;
    checked(backend, values, EmbeddingKind::Image, backend.image_dim())
}

pub fn encode_text(backend: &dyn EncoderBackend, prompt: &str) -> Result<EmbeddingVector> {
    if prompt.trim().is_empty() {
        return Err(Error::EmptyPrompt);
    }
    let values = backend.embed_text(prompt)?;
    checked(backend, values, EmbeddingKind::Text, backend.text_dim())
}

pub fn generate_caption(backend: &dyn EncoderBackend, image: &RgbImage) -> Result<String> {
    if !backend.can_caption() {
        return Err(Error::CaptionUnsupported(backend.backend_id().to_string()));
    }
    let caption = backend.caption(image)?;
    if caption.trim().is_empty() {
        return Err(Error::BackendFailure(format!(
            "{} returned an empty caption",
            backend.backend_id()
        )));
    }
    Ok(caption)
}

/// `img ‖ txt`, image block first.
pub fn concat_embeddings(img: &EmbeddingVector, txt: &EmbeddingVector) -> Result<EmbeddingVector> {
    if img.kind != EmbeddingKind::Image || txt.kind != EmbeddingKind::Text {
        return Err(Error::KindMismatch(format!(
            "expected (image, text), got ({:?}, {:?})",
            img.kind, txt.kind
        )));
    }
    if img.backend_id != txt.backend_id {
        return Err(Error::BackendMismatch {
            expected: img.backend_id.clone(),
            actual: txt.backend_id.clone(),
        });
    }
    let mut values = Vec::with_capacity(img.dim() + txt.dim());
    values.extend_from_slice(&img.values);
    values.extend_from_slice(&txt.values);
    Ok(EmbeddingVector {
        values,
        kind: EmbeddingKind::Concat,
        backend_id: img.backend_id.clone(),
    })
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of the angle between two equal-length, non-zero vectors, clamped
/// to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine(&a.values, &b.values)
}

/// Resolves a backend by its command-line name.
pub fn backend_by_name(name: &str) -> Result<Box<dyn EncoderBackend>> {
    match name {
        "toy" => Ok(Box::new(ToyBackend::new())),
        "toy-joint" => Ok(Box::new(ToyBackend::joint())),
        other => Err(Error::UnknownBackend(other.to_string())),
    }
}

/// Interface conformance checks every backend adapter must pass: declared
/// dimensions, finiteness, determinism, empty-prompt rejection and caption
/// capability consistency.
pub fn check_conformance(backend: &dyn EncoderBackend, images: &[RgbImage], prompts: &[&str]) -> Result<()> {
    let fail = |msg: String| Err(Error::BackendFailure(format!("{}: {msg}", backend.backend_id())));
    if backend.image_dim() == 0 || backend.text_dim() == 0 {
        return fail("dimensions must be positive".into());
    }
    let dims = (backend.image_dim(), backend.text_dim());
    for img in images {
        let a = encode_image(backend, img)?;
        let b = encode_image(backend, img)?;
        if a != b {
            return fail("image embedding is not deterministic".into());
        }
        if backend.can_caption() {
            let c1 = generate_caption(backend, img)?;
            if c1 != generate_caption(backend, img)? {
                return fail("caption is not deterministic".into());
            }
        } else if !matches!(generate_caption(backend, img), Err(Error::CaptionUnsupported(_))) {
            return fail("caption must be unsupported when can_caption is false".into());
        }
    }
    for p in prompts {
        let a = encode_text(backend, p)?;
        if a != encode_text(backend, p)? {
            return fail("text embedding is not deterministic".into());
        }
    }
    if !matches!(encode_text(backend, ""), Err(Error::EmptyPrompt)) {
        return fail("empty prompts must be rejected".into());
    }
    if (backend.image_dim(), backend.text_dim()) != dims {
        return fail("dimensions changed during use".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: &[f64], kind: EmbeddingKind, id: &str) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec(), kind, id).unwrap()
    }

    #[test]
    fn concat_orders_image_first() {
        let i = emb(&[1.0, 0.0], EmbeddingKind::Image, "b");
        let t = emb(&[0.0, 2.0], EmbeddingKind::Text, "b");
        let c = concat_embeddings(&i, &t).unwrap();
        assert_eq!(c.values(), &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(c.kind(), EmbeddingKind::Concat);

        let i = emb(&[1.0; 4], EmbeddingKind::Image, "b");
        let t = emb(&[2.0; 3], EmbeddingKind::Text, "b");
        let c = concat_embeddings(&i, &t).unwrap();
        assert_eq!(c.dim(), 7);
        assert_eq!(&c.values()[..4], &[1.0; 4]);
    }

    #[test]
    fn concat_errors() {
        let i = emb(&[1.0], EmbeddingKind::Image, "a");
        let t = emb(&[1.0], EmbeddingKind::Text, "b");
        assert!(matches!(concat_embeddings(&i, &t), Err(Error::BackendMismatch { .. })));
        assert!(matches!(concat_embeddings(&t, &i), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 1.0], &[1.0, -1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn unknown_backend_name() {
        assert!(backend_by_name("toy").is_ok());
        assert!(matches!(backend_by_name("clip-xl"), Err(Error::UnknownBackend(_))));
    }

    #[test]
    fn non_finite_embeddings_rejected() {
        assert!(EmbeddingVector::new(vec![f64::NAN], EmbeddingKind::Text, "x").is_err());
    }
}
