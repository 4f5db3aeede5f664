//! Four-class source attribution (real, SD, LD, GLIDE) with confidence
//! routing of low-confidence predictions to a single "unseen" class.

use std::fmt::{self, Write as _};
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, DatasetSplit, LabelScheme, PromptImagePair, UNSEEN_CLASS};
use crate::encoders::EncoderBackend;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_entries, EvaluationReport};
use crate::nn::{argmax, TrainHistory};
use crate::pipeline::{train_model, Mode, ModelOptions, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "real")]
    Real,
    SD,
    LD,
    #[serde(rename = "GLIDE")]
    Glide,
    #[serde(rename = "unseen")]
    Unseen,
}

impl Source {
    /// Class index under the five-class open-set scheme.
    pub fn index(self) -> usize {
        match self {
            Source::Real => 0,
            Source::SD => 1,
            Source::LD => 2,
            Source::Glide => 3,
            Source::Unseen => UNSEEN_CLASS,
        }
    }

    fn from_class(class: usize) -> Self {
        match class {
            0 => Source::Real,
            1 => Source::SD,
            2 => Source::LD,
            3 => Source::Glide,
            _ => Source::Unseen,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(LabelScheme::OpenSetAttribution.class_name(self.index()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub source: Source,
    pub confidence: f64,
    pub threshold_used: Option<f64>,
}

/// Argmax attribution, or `Unseen` when the top probability is strictly
/// below `threshold`.
pub fn route(probs: &[f64], threshold: Option<f64>) -> Result<AttributionResult> {
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::BadThreshold(t));
        }
    }
    if probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class = argmax(probs);
    let confidence = probs[class];
    let source = match threshold {
        Some(t) if confidence < t => Source::Unseen,
        _ => Source::from_class(class),
    };
    Ok(AttributionResult {
        source,
        confidence,
        threshold_used: threshold,
    })
}

/// A trained model under the four-class attribution scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributorModel {
    model: TrainedModel,
}

impl AttributorModel {
    pub fn new(model: TrainedModel) -> Result<Self> {
        if model.label_scheme != LabelScheme::Attribution {
            return Err(Error::SchemeMismatch(format!(
                "attributor needs the attribution scheme, model uses {:?}",
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

    pub fn save(&self, path: &Path) -> Result<()> {
        self.model.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(TrainedModel::load(path)?)
    }
}

pub fn train_attributor(
    manifest: &DatasetManifest,
    split: &DatasetSplit,
    mode: Mode,
    backend: Option<&dyn EncoderBackend>,
    options: &ModelOptions,
) -> Result<(AttributorModel, TrainHistory)> {
    if split.label_scheme != LabelScheme::Attribution {
        return Err(Error::SchemeMismatch(format!(
            "expected an attribution split, got {:?}",
            split.label_scheme
        )));
    }
    let counts = DatasetSplit::class_counts(&split.train, 4);
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        let present = counts.iter().filter(|&&c| c > 0).count();
        return Err(Error::SchemeMismatch(format!(
            "attribution needs four classes; training split has {present} (no {})",
            LabelScheme::Attribution.class_name(missing)
        )));
    }
    let (model, history) = train_model(manifest, split, mode, backend, options)?;
    Ok((AttributorModel { model }, history))
}

pub fn attribute(
    model: &AttributorModel,
    image: &RgbImage,
    prompt: Option<&str>,
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
    threshold: Option<f64>,
) -> Result<AttributionResult> {
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::BadThreshold(t));
        }
    }
    let (probs, _) = model.model.probabilities(image, prompt, encoder, captioner)?;
    route(&probs, threshold)
}

/// Four-class accuracy on the split's test side.
pub fn evaluate_attributor(
    model: &AttributorModel,
    manifest: &DatasetManifest,
    split: &DatasetSplit,
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<EvaluationReport> {
    if split.label_scheme != LabelScheme::Attribution {
        return Err(Error::SchemeMismatch(format!(
            "expected an attribution split, got {:?}",
            split.label_scheme
        )));
    }
    evaluate_entries(
        &model.model,
        manifest,
        &split.test,
        LabelScheme::Attribution,
        encoder,
        captioner,
    )
}

/// `0.0, 0.1, …, 1.0`.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Five-class accuracy of confidence routing at each threshold, from
/// precomputed four-class probabilities and open-set labels.
pub fn sweep_from_probabilities(probs: &[Vec<f64>], labels: &[usize], thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", probs.len()),
            actual: format!("{} labels", labels.len()),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&l) = labels.iter().find(|&&l| l > UNSEEN_CLASS) {
        return Err(Error::LabelOutOfRange {
            label: l,
            n_classes: UNSEEN_CLASS + 1,
        });
    }
    thresholds
        .iter()
        .map(|&t| {
            let mut correct = 0usize;
            for (p, &l) in probs.iter().zip(labels) {
                if route(p, Some(t))?.source.index() == l {
                    correct += 1;
                }
            }
            Ok(SweepRow {
                threshold: t,
                accuracy: correct as f64 / probs.len() as f64,
            })
        })
        .collect()
}

/// Threshold sweep over a balanced five-class test set. The attributor is
/// still the four-class model; only the routing changes.
pub fn sweep_thresholds(
    model: &AttributorModel,
    manifest: &DatasetManifest,
    split5: &DatasetSplit,
    thresholds: &[f64],
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<Vec<SweepRow>> {
    if split5.label_scheme != LabelScheme::OpenSetAttribution {
        return Err(Error::SchemeMismatch(format!(
            "sweep needs a five-class open-set split, got {:?}",
            split5.label_scheme
        )));
    }
    let probs: Vec<Vec<f64>> = model
        .model
        .split_probabilities(manifest, &split5.test, encoder, captioner)?
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let labels: Vec<usize> = split5.test.iter().map(|e| e.label).collect();
    sweep_from_probabilities(&probs, &labels, thresholds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: String,
    pub source: Source,
    pub confidence: f64,
    pub threshold_used: Option<f64>,
}

pub fn attribute_records(
    model: &AttributorModel,
    records: &[&PromptImagePair],
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
    threshold: Option<f64>,
) -> Result<Vec<AttributionRecord>> {
    let probs = model.model.record_probabilities(records, encoder, captioner)?;
    records
        .iter()
        .zip(probs)
        .map(|(r, (p, _))| {
            let res = route(&p, threshold)?;
            Ok(AttributionRecord {
                id: r.id.clone(),
                source: res.source,
                confidence: res.confidence,
                threshold_used: res.threshold_used,
            })
        })
        .collect()
}

pub fn attributions_to_jsonl(records: &[AttributionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_rule() {
        let p = [0.95, 0.02, 0.02, 0.01];
        let r = route(&p, Some(0.9)).unwrap();
        assert_eq!(
            (r.source, r.confidence, r.threshold_used),
            (Source::Real, 0.95, Some(0.9))
        );
        let q = [0.85, 0.05, 0.05, 0.05];
        assert_eq!(route(&q, Some(0.9)).unwrap().source, Source::Unseen);
        assert_eq!(route(&q, Some(0.0)).unwrap().source, Source::Real);
        // ties at the threshold stay with the argmax class
        assert_eq!(route(&q, Some(0.85)).unwrap().source, Source::Real);
        assert_eq!(
            route(&q, None).unwrap(),
            AttributionResult {
                threshold_used: None,
                ..route(&q, None).unwrap()
            }
        );
        assert!(matches!(route(&q, Some(1.5)), Err(Error::BadThreshold(_))));
        assert!(matches!(route(&q, Some(-0.1)), Err(Error::BadThreshold(_))));
    }

    #[test]
    fn grid_has_eleven_points() {
        let g = default_threshold_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert_eq!(g[9], 0.9);
    }

    #[test]
    fn source_names() {
        assert_eq!(Source::Glide.to_string(), "GLIDE");
        assert_eq!(Source::Unseen.to_string(), "unseen");
        assert_eq!(serde_json::to_string(&Source::Real).unwrap(), "\"real\"");
    }
}
