//! Binary fake/real detectors: image-only (residual conv net over pixels)
//! and hybrid (perceptron over image ‖ prompt embeddings), with a caption
//! fallback when a hybrid query arrives without a prompt.

use std::fmt::Write as _;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, DatasetSplit, LabelScheme, PromptImagePair, DETECTION_REAL};
use crate::encoders::EncoderBackend;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_entries, EvaluationReport};
use crate::nn::{argmax, TrainHistory};
use crate::pipeline::{train_model, Mode, ModelOptions, PromptProvenance, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    Fake,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    /// Maximum of the two-class softmax.
    pub confidence: f64,
    pub prompt_provenance: PromptProvenance,
}

impl Verdict {
    fn from_probabilities(probs: &[f64], provenance: PromptProvenance) -> Self {
        let class = argmax(probs);
        Verdict {
            label: if class == DETECTION_REAL {
                VerdictLabel::Real
            } else {
                VerdictLabel::Fake
            },
            confidence: probs[class],
            prompt_provenance: provenance,
        }
    }

    /// Probability assigned to the real class.
    pub fn real_probability(&self) -> f64 {
        match self.label {
            VerdictLabel::Real => self.confidence,
            VerdictLabel::Fake => 1.0 - self.confidence,
        }
    }
}

/// A trained model under the detection label scheme (0 = fake, 1 = real).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    model: TrainedModel,
}

impl DetectorModel {
    pub fn new(model: TrainedModel) -> Result<Self> {
        if model.label_scheme != LabelScheme::Detection {
            return Err(Error::SchemeMismatch(format!(
                "detector needs the detection scheme, model uses {:?}",
                model.label_scheme
            )));
        }
        Ok(Self { model })
    }

    pub fn mode(&self) -> Mode {
        self.model.mode
    }

    pub fn inner(&self) -> &TrainedModel {
        &self.model
    }

    pub fn into_inner(self) -> TrainedModel {
        self.model
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.model.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(TrainedModel::load(path)?)
    }
}

pub fn train_detector(
    manifest: &DatasetManifest,
    split: &DatasetSplit,
    mode: Mode,
    backend: Option<&dyn EncoderBackend>,
    options: &ModelOptions,
) -> Result<(DetectorModel, TrainHistory)> {
    if split.label_scheme != LabelScheme::Detection {
        return Err(Error::SchemeMismatch(format!(
            "expected a detection split, got {:?}",
            split.label_scheme
        )));
    }
    let (model, history) = train_model(manifest, split, mode, backend, options)?;
    Ok((DetectorModel { model }, history))
}

/// Classifies one image. A natural prompt, when present, wins over the
/// captioner; image-only models ignore both.
pub fn detect(
    model: &DetectorModel,
    image: &RgbImage,
    prompt: Option<&str>,
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<Verdict> {
    let (probs, provenance) = model.model.probabilities(image, prompt, encoder, captioner)?;
    Ok(Verdict::from_probabilities(&probs, provenance))
}

/// Accuracy and confusion counts on the split's test side.
pub fn evaluate_detector(
    model: &DetectorModel,
    manifest: &DatasetManifest,
    split: &DatasetSplit,
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<EvaluationReport> {
    if split.label_scheme != LabelScheme::Detection {
        return Err(Error::SchemeMismatch(format!(
            "expected a detection split, got {:?}",
            split.label_scheme
        )));
    }
    evaluate_entries(
        &model.model,
        manifest,
        &split.test,
        LabelScheme::Detection,
        encoder,
        captioner,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub label: VerdictLabel,
    pub confidence: f64,
    pub prompt_provenance: PromptProvenance,
}

/// Verdicts for manifest records, in input order.
pub fn detect_records(
    model: &DetectorModel,
    records: &[&PromptImagePair],
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<Vec<DetectionRecord>> {
    let probs = model.model.record_probabilities(records, encoder, captioner)?;
    Ok(records
        .iter()
        .zip(probs)
        .map(|(r, (p, prov))| {
            let v = Verdict::from_probabilities(&p, prov);
            DetectionRecord {
                id: r.id.clone(),
                label: v.label,
                confidence: v.confidence,
                prompt_provenance: v.prompt_provenance,
            }
        })
        .collect())
}

/// Line-delimited JSON, one record per line.
pub fn detections_to_jsonl(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
    }
    out
}
