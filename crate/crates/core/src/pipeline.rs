//! Machinery shared by detectors and attributors: feature extraction in
//! both modes, training with a pre-persistence gradient check, inference
//! with the caption fallback, and the versioned model file.

use std::fs;
use std::path::Path;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, DatasetSplit, LabelScheme, LabeledId, PromptImagePair};
use crate::encoders::{concat_embeddings, encode_image, encode_text, generate_caption, EncoderBackend};
use crate::error::{Error, Result};
use crate::nn::{
    gradient_check_sampled, parameter_digest, softmax, train, ConvConfig, ConvNet, Jitter, Mlp, Network, TrainConfig,
    TrainHistory, Volume,
};
use crate::raster::{load_rgb, to_volume};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Relative-error bounds enforced before a trained model is returned.
pub const MLP_GRADIENT_TOLERANCE: f64 = 1e-4;
pub const CONV_GRADIENT_TOLERANCE: f64 = 1e-3;
const GRADIENT_EPSILON: f64 = 1e-5;
const GRADIENT_COORDS: usize = 256;
const CONV_GRADIENT_COORDS: usize = 16;
const GRADIENT_BATCH: usize = 4;
const GRADIENT_JITTER: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ImageOnly,
    Hybrid,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image-only" | "image_only" => Ok(Mode::ImageOnly),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

/// Which prompt fed a hybrid prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptProvenance {
    Natural,
    Generated,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum Core {
    Conv { net: ConvNet },
    Mlp { net: Mlp },
}

impl Core {
    pub fn params(&self) -> &[f64] {
        match self {
            Core::Conv { net } => net.params(),
            Core::Mlp { net } => net.params(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Core::Conv { net } => net.n_classes(),
            Core::Mlp { net } => net.n_classes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub backend_id: String,
    pub image_dim: usize,
    pub text_dim: usize,
}

/// Architecture and optimizer choices for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub train: TrainConfig,
    /// Hidden width of the hybrid perceptron.
    pub hidden_dim: usize,
    /// Image-only network; `n_classes` is overwritten from the label scheme.
    pub conv: ConvConfig,
    /// L2-normalize image and text embeddings before concatenation.
    pub normalize_embeddings: bool,
    /// Free-form description of the training data, e.g. `SD+MSCOCO`.
    pub train_source: String,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden_dim: 256,
            conv: ConvConfig::desk(2),
            normalize_embeddings: false,
            train_source: String::new(),
        }
    }
}

/// A trained classifier plus everything needed to reproduce its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub mode: Mode,
    pub label_scheme: LabelScheme,
    pub core: Core,
    pub backend: Option<BackendInfo>,
    pub normalize_embeddings: bool,
    pub train_source: String,
    pub train_config: TrainConfig,
    pub train_config_digest: String,
    pub gradient_check_error: f64,
}

/// Features ready for a network.
#[derive(Debug, Clone)]
pub enum Features {
    Raster(Volume),
    Embedding(Vec<f64>),
}

fn backend_info(backend: &dyn EncoderBackend) -> BackendInfo {
    BackendInfo {
        backend_id: backend.backend_id().to_string(),
        image_dim: backend.image_dim(),
        text_dim: backend.text_dim(),
    }
}

/// Hybrid feature vector: image embedding ‖ text embedding.
pub fn hybrid_features(
    backend: &dyn EncoderBackend,
    image: &RgbImage,
    prompt: &str,
    normalize: bool,
) -> Result<Vec<f64>> {
    let mut img = encode_image(backend, image)?;
    let mut txt = encode_text(backend, prompt)?;
    if normalize {
        img = img.l2_normalized()?;
        txt = txt.l2_normalized()?;
    }
    Ok(concat_embeddings(&img, &txt)?.into_values())
}

fn resolve<'a>(manifest: &'a DatasetManifest, entries: &[LabeledId]) -> Result<Vec<&'a PromptImagePair>> {
    let index = manifest.index();
    entries
        .iter()
        .map(|e| {
            index
                .get(e.id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownRecord(e.id.clone()))
        })
        .collect()
}

fn record_features(
    mode: Mode,
    record: &PromptImagePair,
    backend: Option<&dyn EncoderBackend>,
    input_size: usize,
    normalize: bool,
) -> Result<Features> {
    let image = load_rgb(&record.image_path)?;
    match mode {
        Mode::ImageOnly => Ok(Features::Raster(to_volume(&image, input_size))),
        Mode::Hybrid => {
            let backend = backend.ok_or_else(|| Error::ModeMismatch("hybrid mode needs an encoder backend".into()))?;
            if !record.has_prompt() {
                return Err(Error::PromptMissing(record.id.clone()));
            }
            Ok(Features::Embedding(hybrid_features(
                backend,
                &image,
                &record.prompt,
                normalize,
            )?))
        }
    }
}

fn split_features<T, F>(features: Vec<Features>, pick: F) -> Vec<T>
where
    F: Fn(Features) -> Option<T>,
{
    features.into_iter().filter_map(pick).collect()
}

/// Trains a classifier for `split` and runs a sampled gradient check on the
/// result; a failed check is an error, so no unchecked model is returned.
pub fn train_model(
    manifest: &DatasetManifest,
    split: &DatasetSplit,
    mode: Mode,
    backend: Option<&dyn EncoderBackend>,
    options: &ModelOptions,
) -> Result<(TrainedModel, TrainHistory)> {
    options.train.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_classes = split.label_scheme.n_classes();
    let train_records = resolve(manifest, &split.train)?;
    let test_records = resolve(manifest, &split.test)?;
    if mode == Mode::Hybrid {
        if backend.is_none() {
            return Err(Error::ModeMismatch("hybrid mode needs an encoder backend".into()));
        }
        if let Some(r) = train_records.iter().chain(&test_records).find(|r| !r.has_prompt()) {
            return Err(Error::PromptMissing(r.id.clone()));
        }
    }

    let mut conv_cfg = options.conv.clone();
    conv_cfg.n_classes = n_classes;
    let extract = |records: &[&PromptImagePair]| -> Result<Vec<Features>> {
        records
            .par_iter()
            .map(|r| record_features(mode, r, backend, conv_cfg.input_size, options.normalize_embeddings))
            .collect()
    };
    let train_x = extract(&train_records)?;
    let test_x = extract(&test_records)?;
    let train_y: Vec<usize> = split.train.iter().map(|e| e.label).collect();
    let test_y: Vec<usize> = split.test.iter().map(|e| e.label).collect();
    let seed = options.train.seed;

    let (core, history, grad_err) = match mode {
        Mode::ImageOnly => {
            let tx = split_features(train_x, |f| match f {
                Features::Raster(v) => Some(v),
                _ => None,
            });
            let hx = split_features(test_x, |f| match f {
                Features::Raster(v) => Some(v),
                _ => None,
            });
            let net = ConvNet::init(conv_cfg.clone(), seed)?;
            let holdout = (!hx.is_empty()).then_some((&hx[..], &test_y[..]));
            let (net, history) = train(net, &tx, &train_y, holdout, &options.train)?;
            let err = checked_gradients(&net, &tx, &train_y, seed, CONV_GRADIENT_COORDS, CONV_GRADIENT_TOLERANCE)?;
            (Core::Conv { net }, history, err)
        }
        Mode::Hybrid => {
            let tx = split_features(train_x, |f| match f {
                Features::Embedding(v) => Some(v),
                _ => None,
            });
            let hx = split_features(test_x, |f| match f {
                Features::Embedding(v) => Some(v),
                _ => None,
            });
            let net = Mlp::init(tx[0].len(), options.hidden_dim, n_classes, seed)?;
            let holdout = (!hx.is_empty()).then_some((&hx[..], &test_y[..]));
            let (net, history) = train(net, &tx, &train_y, holdout, &options.train)?;
            let err = checked_gradients(&net, &tx, &train_y, seed, GRADIENT_COORDS, MLP_GRADIENT_TOLERANCE)?;
            (Core::Mlp { net }, history, err)
        }
    };

    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        mode,
        label_scheme: split.label_scheme,
        core,
        backend: match mode {
            Mode::Hybrid => backend.map(backend_info),
            Mode::ImageOnly => None,
        },
        normalize_embeddings: options.normalize_embeddings,
        train_source: options.train_source.clone(),
        train_config: options.train.clone(),
        train_config_digest: options.train.digest(),
        gradient_check_error: grad_err,
    };
    Ok((model, history))
}

fn checked_gradients<N: Network>(
    net: &N,
    inputs: &[N::Input],
    labels: &[usize],
    seed: u64,
    coords: usize,
    tolerance: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = inputs.len().min(GRADIENT_BATCH);
    let batch: Vec<N::Input> = inputs[..n]
        .iter()
        .map(|x| x.jitter(&mut rng, GRADIENT_JITTER))
        .collect();
    let err = gradient_check_sampled(net, &batch, &labels[..n], GRADIENT_EPSILON, coords, seed)?;
    if err >= tolerance {
        return Err(Error::GradientCheckFailed { error: err, tolerance });
    }
    Ok(err)
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.core.n_classes()
    }

    pub fn digest(&self) -> String {
        parameter_digest(self.core.params())
    }

    pub fn input_size(&self) -> Option<usize> {
        match &self.core {
            Core::Conv { net } => Some(net.config().input_size),
            Core::Mlp { .. } => None,
        }
    }

    /// The encoder, if it matches the one recorded at training time.
    pub fn check_backend<'a>(&self, encoder: Option<&'a dyn EncoderBackend>) -> Result<&'a dyn EncoderBackend> {
        let info = self
            .backend
            .as_ref()
            .ok_or_else(|| Error::Format("hybrid model without backend record".into()))?;
        let encoder = encoder.ok_or_else(|| Error::ModeMismatch("hybrid model needs an encoder backend".into()))?;
        if encoder.backend_id() != info.backend_id {
            return Err(Error::BackendMismatch {
                expected: info.backend_id.clone(),
                actual: encoder.backend_id().to_string(),
            });
        }
        if (encoder.image_dim(), encoder.text_dim()) != (info.image_dim, info.text_dim) {
            return Err(Error::BackendMismatch {
                expected: format!("{} ({}+{})", info.backend_id, info.image_dim, info.text_dim),
                actual: format!(
                    "{} ({}+{})",
                    encoder.backend_id(),
                    encoder.image_dim(),
                    encoder.text_dim()
                ),
            });
        }
        Ok(encoder)
    }

    /// Class probabilities for one image.
    ///
    /// Image-only models ignore prompts. Hybrid models use the natural prompt
    /// when one is given, else a caption from `captioner`.
    pub fn probabilities(
        &self,
        image: &RgbImage,
        prompt: Option<&str>,
        encoder: Option<&dyn EncoderBackend>,
        captioner: Option<&dyn EncoderBackend>,
    ) -> Result<(Vec<f64>, PromptProvenance)> {
        match &self.core {
            Core::Conv { net } => {
                let x = to_volume(image, net.config().input_size);
                Ok((softmax(&net.forward(&x)?)?, PromptProvenance::None))
            }
            Core::Mlp { net } => {
                let encoder = self.check_backend(encoder)?;
                let (text, provenance) = match prompt.filter(|p| !p.trim().is_empty()) {
                    Some(p) => (p.to_string(), PromptProvenance::Natural),
                    None => {
                        let captioner = captioner
                            .ok_or_else(|| Error::CaptionUnsupported("no captioning backend supplied".into()))?;
                        (generate_caption(captioner, image)?, PromptProvenance::Generated)
                    }
                };
                let x = hybrid_features(encoder, image, &text, self.normalize_embeddings)?;
                Ok((softmax(&net.forward(&x)?)?, provenance))
            }
        }
    }

    /// Probabilities for manifest records, in order, computed in parallel.
    pub fn record_probabilities(
        &self,
        records: &[&PromptImagePair],
        encoder: Option<&dyn EncoderBackend>,
        captioner: Option<&dyn EncoderBackend>,
    ) -> Result<Vec<(Vec<f64>, PromptProvenance)>> {
        records
            .par_iter()
            .map(|r| {
                let image = load_rgb(&r.image_path)?;
                let prompt = r.has_prompt().then_some(r.prompt.as_str());
                self.probabilities(&image, prompt, encoder, captioner)
            })
            .collect()
    }

    pub fn split_probabilities(
        &self,
        manifest: &DatasetManifest,
        entries: &[LabeledId],
        encoder: Option<&dyn EncoderBackend>,
        captioner: Option<&dyn EncoderBackend>,
    ) -> Result<Vec<(Vec<f64>, PromptProvenance)>> {
        let records = resolve(manifest, entries)?;
        self.record_probabilities(&records, encoder, captioner)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format {} (supported: {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        if model.core.n_classes() != model.label_scheme.n_classes() {
            return Err(Error::Format("head size disagrees with label scheme".into()));
        }
        Ok(model)
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
