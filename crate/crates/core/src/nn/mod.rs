//! From-scratch classifiers: a two-layer perceptron over embeddings and a
//! small residual convolutional network over rasters, sharing one training
//! loop and one gradient checker through the [`Network`] trait.

mod conv;
mod mlp;
mod train;

pub use conv::{ConvConfig, ConvNet};
pub use mlp::{Activation, Mlp};
pub use train::{gradient_check, gradient_check_sampled, train, EpochStats, TrainConfig, TrainHistory};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A differentiable classifier whose parameters live in one flat buffer.
pub trait Network: Clone + Send + Sync {
    type Input: Clone + Send + Sync + Jitter;

    fn n_classes(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn check_input(&self, x: &Self::Input) -> Result<()>;
    fn forward(&self, x: &Self::Input) -> Result<Vec<f64>>;

    /// Cross-entropy loss of one labeled sample. The gradient with respect to
    /// every parameter is added into `grad`, which has `params().len()` slots.
    /// Returns the loss and the predicted class.
    fn accumulate_gradient(&self, x: &Self::Input, label: usize, grad: &mut [f64]) -> Result<(f64, usize)>;
}

/// Inputs that can be nudged by small seeded noise, so gradient checks do
/// not land exactly on a rectifier kink.
pub trait Jitter {
    fn jitter<R: Rng>(&self, rng: &mut R, scale: f64) -> Self;
}

impl Jitter for Vec<f64> {
    fn jitter<R: Rng>(&self, rng: &mut R, scale: f64) -> Self {
        self.iter().map(|v| v + rng.random_range(-scale..scale)).collect()
    }
}

/// Channel-major 3-D activation volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }
}

impl Jitter for Volume {
    fn jitter<R: Rng>(&self, rng: &mut R, scale: f64) -> Self {
        Volume {
            data: self.data.jitter(rng, scale),
            ..*self
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `-ln softmax(logits)[label]`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Class and confidence for already-computed logits.
pub fn predict_logits(logits: &[f64]) -> Result<(usize, f64)> {
    let probs = softmax(logits)?;
    let class = argmax(&probs);
    Ok((class, probs[class]))
}

/// `(argmax softmax(forward(x)), max probability)`.
pub fn predict<N: Network>(net: &N, x: &N::Input) -> Result<(usize, f64)> {
    predict_logits(&net.forward(x)?)
}

/// Gradient of the cross-entropy loss with respect to the logits.
pub(crate) fn logit_gradient(logits: &[f64], label: usize) -> (Vec<f64>, f64, usize) {
    let probs = softmax(logits).expect("finite logits");
    let loss = cross_entropy(logits, label);
    let pred = argmax(&probs);
    let mut d = probs;
    d[label] -= 1.0;
    (d, loss, pred)
}

/// SHA-256 over the little-endian bytes of a parameter buffer.
pub fn parameter_digest(params: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn check_label(label: usize, n_classes: usize) -> Result<()> {
    if label >= n_classes {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    Ok(())
}
