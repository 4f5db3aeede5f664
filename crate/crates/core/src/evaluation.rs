//! Accuracy/confusion reports and the experiment drivers: cross-model and
//! cross-dataset matrices and training-size ablations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_attribution_split_with, build_detection_split_with, DatasetManifest, DatasetSplit, LabelScheme, LabeledId,
    Origin, SplitOptions,
};
use crate::encoders::EncoderBackend;
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::pipeline::{train_model, Mode, ModelOptions, PromptProvenance, TrainedModel};

/// Accuracy plus a confusion matrix (rows: true class, columns: predicted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n_total: usize,
    pub label_scheme: LabelScheme,
    pub dataset_tag: String,
    pub model_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvaluationReport {
    pub fn empty(label_scheme: LabelScheme, dataset_tag: impl Into<String>, model_digest: impl Into<String>) -> Self {
        let n = label_scheme.n_classes();
        Self {
            accuracy: 0.0,
            confusion: vec![vec![0; n]; n],
            n_total: 0,
            label_scheme,
            dataset_tag: dataset_tag.into(),
            model_digest: model_digest.into(),
            notes: Vec::new(),
        }
    }

    /// Builds a report from `(true, predicted)` label pairs.
    pub fn from_pairs(
        label_scheme: LabelScheme,
        pairs: &[(usize, usize)],
        dataset_tag: impl Into<String>,
        model_digest: impl Into<String>,
    ) -> Result<Self> {
        let mut report = Self::empty(label_scheme, dataset_tag, model_digest);
        let n = label_scheme.n_classes();
        for &(t, p) in pairs {
            if t >= n || p >= n {
                return Err(Error::LabelOutOfRange {
                    label: t.max(p),
                    n_classes: n,
                });
            }
            report.confusion[t][p] += 1;
        }
        report.n_total = pairs.len();
        report.recompute();
        Ok(report)
    }

    fn recompute(&mut self) {
        let trace: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        self.accuracy = if self.n_total == 0 {
            0.0
        } else {
            trace as f64 / self.n_total as f64
        };
    }

    /// Adds another report's counts; associative and commutative.
    pub fn merge(&mut self, other: &EvaluationReport) -> Result<()> {
        if other.label_scheme != self.label_scheme {
            return Err(Error::SchemeMismatch(format!(
                "{:?} vs {:?}",
                self.label_scheme, other.label_scheme
            )));
        }
        for (row, orow) in self.confusion.iter_mut().zip(&other.confusion) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self.n_total += other.n_total;
        for note in &other.notes {
            if !self.notes.contains(note) {
                self.notes.push(note.clone());
            }
        }
        self.recompute();
        Ok(())
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tab-separated confusion matrix with class-name headers.
    pub fn confusion_tsv(&self) -> String {
        let names: Vec<&str> = (0..self.confusion.len())
            .map(|i| self.label_scheme.class_name(i))
            .collect();
        let mut out = format!("true\\predicted\t{}\n", names.join("\t"));
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&format!("{}\t{}\n", names[i], cells.join("\t")));
        }
        out
    }
}

pub const FIRST_PROMPT_NOTE: &str = "hybrid evaluation uses the first prompt listed for each image";

/// Scores a trained model on labeled manifest entries.
pub fn evaluate_entries(
    model: &TrainedModel,
    manifest: &DatasetManifest,
    entries: &[LabeledId],
    scheme: LabelScheme,
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<EvaluationReport> {
    let probs = model.split_probabilities(manifest, entries, encoder, captioner)?;
    let pairs: Vec<(usize, usize)> = entries
        .iter()
        .zip(&probs)
        .map(|(e, (p, _))| (e.label, argmax(p)))
        .collect();
    let tag = dataset_tag(manifest, entries);
    let mut report = EvaluationReport::from_pairs(scheme, &pairs, tag, model.digest())?;
    if probs.iter().any(|(_, prov)| *prov == PromptProvenance::Generated) {
        report
            .notes
            .push("some prompts were generated by the captioning backend".into());
    }
    Ok(report)
}

fn dataset_tag(manifest: &DatasetManifest, entries: &[LabeledId]) -> String {
    let index = manifest.index();
    let tags: BTreeSet<&str> = entries
        .iter()
        .filter_map(|e| index.get(e.id.as_str()).map(|r| r.dataset_tag.as_str()))
        .collect();
    tags.into_iter().collect::<Vec<_>>().join("+")
}

/// What a model is trained to predict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detection { fake_origin: Origin },
    Attribution,
}

impl Task {
    pub fn scheme(&self) -> LabelScheme {
        match self {
            Task::Detection { .. } => LabelScheme::Detection,
            Task::Attribution => LabelScheme::Attribution,
        }
    }

    pub fn split(
        &self,
        manifest: &DatasetManifest,
        n_per_class: usize,
        seed: u64,
        opts: &SplitOptions,
    ) -> Result<DatasetSplit> {
        match self {
            Task::Detection { fake_origin } => {
                build_detection_split_with(manifest, fake_origin, n_per_class, seed, opts)
            }
            Task::Attribution => build_attribution_split_with(manifest, n_per_class, seed, opts),
        }
    }
}

/// Accuracies reported for detectors trained on SD+MSCOCO and evaluated on
/// MSCOCO fakes from other generators. Carried as report metadata only;
/// they need the real generators and pretrained encoders to reproduce.
pub fn reference_accuracy(mode: Mode, provenance: PromptProvenance, eval_origin: &Origin) -> Option<f64> {
    let column = match eval_origin {
        Origin::LD => 0,
        Origin::Glide => 1,
        Origin::Dalle2 => 2,
        _ => return None,
    };
    let row: [f64; 3] = match (mode, provenance) {
        (Mode::ImageOnly, _) => [0.834, 0.613, 0.554],
        (Mode::Hybrid, PromptProvenance::Generated) => [0.945, 0.909, 0.891],
        (Mode::Hybrid, _) => [0.932, 0.899, 0.885],
    };
    Some(row[column])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub train_source: String,
    pub eval_origin: String,
    pub dataset_tag: String,
    pub accuracy: f64,
    pub n_total: usize,
    pub reference_accuracy: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrixOptions {
    /// Balanced evaluation size per class.
    pub n_per_class: usize,
    pub seed: u64,
    /// Records never used for evaluation, typically the training ids.
    pub exclude: BTreeSet<String>,
}

/// Evaluates one model on every (evaluation origin × dataset) pair.
///
/// Detection models get a balanced fake/real set per pair. Attribution
/// models ignore `eval_origins` and get one balanced four-class row per
/// dataset.
pub fn cross_matrix(
    model: &TrainedModel,
    manifests: &[DatasetManifest],
    eval_origins: &[Origin],
    options: &CrossMatrixOptions,
    encoder: Option<&dyn EncoderBackend>,
    captioner: Option<&dyn EncoderBackend>,
) -> Result<Vec<CrossRow>> {
    let split_opts = SplitOptions {
        holdout_fraction: 1.0,
        exclude: options.exclude.clone(),
    };
    let tasks: Vec<(String, Task)> = match model.label_scheme {
        LabelScheme::Detection => eval_origins
            .iter()
            .map(|o| (o.to_string(), Task::Detection { fake_origin: o.clone() }))
            .collect(),
        LabelScheme::Attribution => vec![("real/SD/LD/GLIDE".to_string(), Task::Attribution)],
        LabelScheme::OpenSetAttribution => {
            return Err(Error::SchemeMismatch(
                "models are never trained on the open-set scheme".into(),
            ))
        }
    };

    let mut rows = Vec::with_capacity(tasks.len() * manifests.len());
    for manifest in manifests {
        let (manifest, mut notes) = match model.mode {
            Mode::Hybrid => (manifest.first_prompt_per_image(), vec![FIRST_PROMPT_NOTE.to_string()]),
            Mode::ImageOnly => (manifest.clone(), Vec::new()),
        };
        for (label, task) in &tasks {
            let split = task.split(&manifest, options.n_per_class, options.seed, &split_opts)?;
            let report = evaluate_entries(model, &manifest, &split.test, task.scheme(), encoder, captioner)?;
            notes.extend(report.notes.iter().cloned());
            let provenance = if report.notes.is_empty() {
                PromptProvenance::Natural
            } else {
                PromptProvenance::Generated
            };
            let reference = match task {
                Task::Detection { fake_origin } if model.train_source.starts_with("SD") => {
                    reference_accuracy(model.mode, provenance, fake_origin)
                }
                _ => None,
            };
            rows.push(CrossRow {
                train_source: model.train_source.clone(),
                eval_origin: label.clone(),
                dataset_tag: report.dataset_tag.clone(),
                accuracy: report.accuracy,
                n_total: report.n_total,
                reference_accuracy: reference,
                notes: notes.clone(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub size: usize,
    pub accuracy: f64,
    pub n_test: usize,
}

/// Trains one model per training-set size and scores each on the same
/// held-out set.
///
/// `sizes` are total training images, split evenly across classes. The test
/// set (`test_per_class` per class) is drawn first and excluded from every
/// training draw. All runs share `options.train.seed`.
pub fn size_ablation(
    manifest: &DatasetManifest,
    task: &Task,
    sizes: &[usize],
    test_per_class: usize,
    mode: Mode,
    backend: Option<&dyn EncoderBackend>,
    options: &ModelOptions,
) -> Result<Vec<AblationRow>> {
    let n_classes = task.scheme().n_classes();
    if sizes.iter().any(|&s| s / n_classes == 0) {
        return Err(Error::EmptyDataset);
    }
    let seed = options.train.seed;
    let test = task.split(manifest, test_per_class, seed, &SplitOptions::evaluation_only())?;
    let train_opts = SplitOptions {
        holdout_fraction: 0.0,
        exclude: test.all_ids(),
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut split = task.split(manifest, size / n_classes, seed, &train_opts)?;
        split.test = test.test.clone();
        let (model, _) = train_model(manifest, &split, mode, backend, options)?;
        let report = evaluate_entries(&model, manifest, &test.test, task.scheme(), backend, None)?;
        rows.push(AblationRow {
            size,
            accuracy: report.accuracy,
            n_test: report.n_total,
        });
    }
    Ok(rows)
}
