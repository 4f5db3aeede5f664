//! Prompt/image manifests, label schemes and balanced seeded splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Where an image came from: a camera (`Real`) or a named generator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Real,
    SD,
    LD,
    Glide,
    Dalle2,
    Other(String),
}

impl Origin {
    pub fn as_str(&self) -> &str {
        match self {
            Origin::Real => "real",
            Origin::SD => "SD",
            Origin::LD => "LD",
            Origin::Glide => "GLIDE",
            Origin::Dalle2 => "DALLE2",
            Origin::Other(name) => name,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Origin::Real)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err("origin must not be empty".into());
        }
        Ok(match trimmed.to_ascii_uppercase().as_str() {
            "REAL" => Origin::Real,
            "SD" => Origin::SD,
            "LD" => Origin::LD,
            "GLIDE" => Origin::Glide,
            "DALLE2" | "DALLE-2" | "DALL-E2" | "DALL-E-2" => Origin::Dalle2,
            _ => Origin::Other(trimmed.to_string()),
        })
    }
}

impl Serialize for Origin {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One manifest line: an image, the prompt it belongs to, and its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptImagePair {
    pub id: String,
    pub image_path: PathBuf,
    #[serde(default)]
    pub prompt: String,
    pub origin: Origin,
    pub dataset_tag: String,
    /// Ground-truth topic tags, used by topic-level authenticity ranking.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topics: Vec<String>,
}

impl PromptImagePair {
    pub fn has_prompt(&self) -> bool {
        !self.prompt.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<PromptImagePair>,
    pub source_uri: String,
    pub counts_by_origin: BTreeMap<Origin, usize>,
}

impl DatasetManifest {
    /// Builds a manifest from in-memory records, enforcing id uniqueness.
    /// Image paths are not checked here; see [`load_manifest`].
    pub fn from_records(records: Vec<PromptImagePair>, source_uri: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        let counts_by_origin = count_origins(&records);
        Ok(Self {
            records,
            source_uri: source_uri.into(),
            counts_by_origin,
        })
    }

    pub fn get(&self, id: &str) -> Option<&PromptImagePair> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Id-keyed lookup table for repeated access.
    pub fn index(&self) -> BTreeMap<&str, &PromptImagePair> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn count(&self, origin: &Origin) -> usize {
        self.counts_by_origin.get(origin).copied().unwrap_or(0)
    }

    /// Keeps only the first record (in file order) for each image path.
    /// Corpora with several captions per image are evaluated on the first one.
    pub fn first_prompt_per_image(&self) -> DatasetManifest {
        let mut seen = HashSet::new();
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| seen.insert(r.image_path.clone()))
            .cloned()
            .collect();
        let counts_by_origin = count_origins(&records);
        DatasetManifest {
            records,
            source_uri: self.source_uri.clone(),
            counts_by_origin,
        }
    }

    /// Writes the manifest as line-delimited JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn count_origins(records: &[PromptImagePair]) -> BTreeMap<Origin, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.origin.clone()).or_insert(0) += 1;
    }
    counts
}

/// Loads a line-delimited JSON manifest.
///
/// Relative image paths are resolved against the manifest's directory and
/// must exist. Every bad line is collected; a single problem is returned as
/// itself, several as [`Error::ManifestErrors`].
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: PromptImagePair = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(Error::MalformedRecord {
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if record.id.is_empty() {
            errors.push(Error::MalformedRecord {
                line: line_no,
                reason: "empty id".into(),
            });
            continue;
        }
        if record.image_path.is_relative() {
            record.image_path = base.join(&record.image_path);
        }
        if !record.image_path.is_file() {
            errors.push(Error::MalformedRecord {
                line: line_no,
                reason: format!("image not found: {}", record.image_path.display()),
            });
            continue;
        }
        if !seen.insert(record.id.clone()) {
            errors.push(Error::DuplicateId(record.id));
            continue;
        }
        records.push(record);
    }

    match errors.len() {
        0 => DatasetManifest::from_records(records, path.display().to_string()),
        1 => Err(errors.pop().expect("one error")),
        _ => Err(Error::ManifestErrors(errors)),
    }
}

/// How origins map to integer class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// 0 = fake, 1 = real.
    Detection,
    /// 0 = real, 1 = SD, 2 = LD, 3 = GLIDE.
    Attribution,
    /// The attribution classes plus 4 = unseen generator. Used only to score
    /// confidence routing; models are never trained on it.
    OpenSetAttribution,
}

pub const DETECTION_FAKE: usize = 0;
pub const DETECTION_REAL: usize = 1;
pub const UNSEEN_CLASS: usize = 4;

impl LabelScheme {
    pub fn n_classes(self) -> usize {
        match self {
            LabelScheme::Detection => 2,
            LabelScheme::Attribution => 4,
            LabelScheme::OpenSetAttribution => 5,
        }
    }

    pub fn class_name(self, label: usize) -> &'static str {
        match (self, label) {
            (LabelScheme::Detection, 0) => "fake",
            (LabelScheme::Detection, 1) => "real",
            (_, 0) => "real",
            (_, 1) => "SD",
            (_, 2) => "LD",
            (_, 3) => "GLIDE",
            (LabelScheme::OpenSetAttribution, 4) => "unseen",
            _ => "invalid",
        }
    }

    /// Label of a seen attribution origin, if any.
    pub fn attribution_label(origin: &Origin) -> Option<usize> {
        match origin {
            Origin::Real => Some(0),
            Origin::SD => Some(1),
            Origin::LD => Some(2),
            Origin::Glide => Some(3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledId {
    pub id: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledId>,
    pub test: Vec<LabeledId>,
    pub label_scheme: LabelScheme,
    pub seed: u64,
    pub balanced: bool,
}

impl DatasetSplit {
    pub fn class_counts(entries: &[LabeledId], n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for e in entries {
            if e.label < n_classes {
                counts[e.label] += 1;
            }
        }
        counts
    }

    pub fn all_ids(&self) -> BTreeSet<String> {
        self.train.iter().chain(&self.test).map(|e| e.id.clone()).collect()
    }

    /// The same records with every entry moved to the test side.
    pub fn into_evaluation_only(mut self) -> Self {
        self.train.append(&mut self.test);
        self.test = std::mem::take(&mut self.train);
        self
    }
}

/// Knobs shared by every split builder.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOptions {
    /// Fraction of each class held out for testing.
    pub holdout_fraction: f64,
    /// Ids that must not be sampled, e.g. records already used for training.
    pub exclude: BTreeSet<String>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            exclude: BTreeSet::new(),
        }
    }
}

impl SplitOptions {
    pub fn evaluation_only() -> Self {
        Self {
            holdout_fraction: 1.0,
            ..Self::default()
        }
    }
}

struct ClassPool {
    label: usize,
    origins: Vec<Origin>,
}

pub fn build_detection_split(
    manifest: &DatasetManifest,
    fake_origin: &Origin,
    n_per_class: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    build_detection_split_with(manifest, fake_origin, n_per_class, seed, &SplitOptions::default())
}

pub fn build_detection_split_with(
    manifest: &DatasetManifest,
    fake_origin: &Origin,
    n_per_class: usize,
    seed: u64,
    options: &SplitOptions,
) -> Result<DatasetSplit> {
    if fake_origin.is_real() {
        return Err(Error::InvalidParameter("fake origin cannot be real".into()));
    }
    let pools = [
        ClassPool {
            label: DETECTION_FAKE,
            origins: vec![fake_origin.clone()],
        },
        ClassPool {
            label: DETECTION_REAL,
            origins: vec![Origin::Real],
        },
    ];
    build_balanced(manifest, LabelScheme::Detection, &pools, n_per_class, seed, options)
}

pub fn build_attribution_split(manifest: &DatasetManifest, n_per_class: usize, seed: u64) -> Result<DatasetSplit> {
    build_attribution_split_with(manifest, n_per_class, seed, &SplitOptions::default())
}

pub fn build_attribution_split_with(
    manifest: &DatasetManifest,
    n_per_class: usize,
    seed: u64,
    options: &SplitOptions,
) -> Result<DatasetSplit> {
    let pools = attribution_pools();
    build_balanced(manifest, LabelScheme::Attribution, &pools, n_per_class, seed, options)
}

/// Five-class evaluation set: the four attribution classes plus every origin
/// in `unseen` collapsed into one "unseen" class.
pub fn build_open_set_split(
    manifest: &DatasetManifest,
    unseen: &[Origin],
    n_per_class: usize,
    seed: u64,
    options: &SplitOptions,
) -> Result<DatasetSplit> {
    if unseen.is_empty() {
        return Err(Error::InvalidParameter("at least one unseen origin is required".into()));
    }
    if let Some(o) = unseen.iter().find(|o| LabelScheme::attribution_label(o).is_some()) {
        return Err(Error::InvalidParameter(format!("{o} is a seen attribution class")));
    }
    let mut pools = attribution_pools();
    pools.push(ClassPool {
        label: UNSEEN_CLASS,
        origins: unseen.to_vec(),
    });
    build_balanced(
        manifest,
        LabelScheme::OpenSetAttribution,
        &pools,
        n_per_class,
        seed,
        options,
    )
}

/// `n` records of one origin drawn without replacement, in draw order.
/// Independent of manifest line order.
pub fn sample_origin<'a>(
    manifest: &'a DatasetManifest,
    origin: &Origin,
    n: usize,
    seed: u64,
) -> Result<Vec<&'a PromptImagePair>> {
    let mut candidates: Vec<&PromptImagePair> = manifest.records.iter().filter(|r| &r.origin == origin).collect();
    if candidates.len() < n {
        return Err(Error::InsufficientRecords {
            origin: origin.clone(),
            available: candidates.len(),
            requested: n,
        });
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, candidates.len(), n)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

fn attribution_pools() -> Vec<ClassPool> {
    [Origin::Real, Origin::SD, Origin::LD, Origin::Glide]
        .into_iter()
        .enumerate()
        .map(|(label, o)| ClassPool {
            label,
            origins: vec![o],
        })
        .collect()
}

fn build_balanced(
    manifest: &DatasetManifest,
    scheme: LabelScheme,
    pools: &[ClassPool],
    n_per_class: usize,
    seed: u64,
    options: &SplitOptions,
) -> Result<DatasetSplit> {
    if !(0.0..=1.0).contains(&options.holdout_fraction) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction {} outside [0, 1]",
            options.holdout_fraction
        )));
    }
    // Canonical ordering makes the split independent of manifest line order.
    let mut sorted: Vec<&PromptImagePair> = manifest
        .records
        .iter()
        .filter(|r| !options.exclude.contains(&r.id))
        .collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let candidates: Vec<Vec<&PromptImagePair>> = pools
        .iter()
        .map(|pool| {
            sorted
                .iter()
                .copied()
                .filter(|r| pool.origins.contains(&r.origin))
                .collect()
        })
        .collect();
    for (pool, cands) in pools.iter().zip(&candidates) {
        if cands.len() < n_per_class {
            return Err(Error::InsufficientRecords {
                origin: pool.origins[0].clone(),
                available: cands.len(),
                requested: n_per_class,
            });
        }
    }

    let n_test = (n_per_class as f64 * options.holdout_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(pools.len() * (n_per_class - n_test));
    let mut test = Vec::with_capacity(pools.len() * n_test);
    for (pool, cands) in pools.iter().zip(&candidates) {
        let picked = index::sample(&mut rng, cands.len(), n_per_class);
        for (k, idx) in picked.into_iter().enumerate() {
            let entry = LabeledId {
                id: cands[idx].id.clone(),
                label: pool.label,
            };
            if k < n_test {
                test.push(entry);
            } else {
                train.push(entry);
            }
        }
    }

    Ok(DatasetSplit {
        train,
        test,
        label_scheme: scheme,
        seed,
        balanced: true,
    })
}
