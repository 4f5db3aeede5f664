//! Prompt-side analyses: prompt/image connection distributions,
//! descriptiveness binning, topic authenticity ranking, density-based prompt
//! clustering and structural statistics (length, noun ratio).

use std::collections::BTreeMap;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PromptImagePair;
use crate::detection::{detect, DetectorModel, Verdict, VerdictLabel};
use crate::encoders::{cosine_similarity, encode_image, encode_text, EncoderBackend};
use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::raster::load_rgb;

/// Softmax temperature applied to connection similarities.
pub const DEFAULT_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionDistribution {
    pub prompt_id: String,
    pub p_real: f64,
    pub p_fake: f64,
}

/// `softmax(τ·sim_real, τ·sim_fake)`.
pub fn connection_from_similarities(
    prompt_id: impl Into<String>,
    sim_real: f64,
    sim_fake: f64,
    temperature: f64,
) -> Result<ConnectionDistribution> {
    let p = softmax(&[sim_real * temperature, sim_fake * temperature])?;
    Ok(ConnectionDistribution {
        prompt_id: prompt_id.into(),
        p_real: p[0],
        p_fake: p[1],
    })
}

/// How strongly a prompt binds to its real image versus its generated one.
/// The backend must embed images and text in one space.
pub fn connection_distribution(
    backend: &dyn EncoderBackend,
    prompt_id: &str,
    prompt: &str,
    real_image: &RgbImage,
    fake_image: &RgbImage,
    temperature: f64,
) -> Result<ConnectionDistribution> {
    let text = encode_text(backend, prompt)?;
    let real = encode_image(backend, real_image)?;
    let fake = encode_image(backend, fake_image)?;
    let sim_real = cosine_similarity(&text, &real)?;
    let sim_fake = cosine_similarity(&text, &fake)?;
    connection_from_similarities(prompt_id, sim_real, sim_fake, temperature)
}

/// Cosine similarity between a prompt's embedding and its image's.
pub fn descriptiveness(backend: &dyn EncoderBackend, prompt: &str, image: &RgbImage) -> Result<f64> {
    let text = encode_text(backend, prompt)?;
    let img = encode_image(backend, image)?;
    cosine_similarity(&text, &img)
}

/// Descriptiveness for many `(prompt, image)` pairs, in input order.
pub fn descriptiveness_batch(backend: &dyn EncoderBackend, samples: &[(&str, &RgbImage)]) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|(p, img)| descriptiveness(backend, p, img))
        .collect()
}

/// A sample with its descriptiveness and whether the detector got it right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub score: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Equal-count bins over the sorted scores.
    Quantile,
    /// Equal-width score intervals between the minimum and maximum.
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBin {
    pub index: usize,
    pub min_score: f64,
    pub max_score: f64,
    pub members: Vec<String>,
    /// Detector accuracy within the bin; `None` for an empty bin.
    pub accuracy: Option<f64>,
}

/// Groups samples into `n_bins` score-ordered bins.
///
/// Quantile bins differ in size by at most one, larger bins first. Ties in
/// score keep input order.
pub fn bin_by_descriptiveness(samples: &[ScoredSample], n_bins: usize, binning: Binning) -> Result<Vec<ScoreBin>> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be at least 1".into()));
    }
    if samples.len() < n_bins {
        return Err(Error::TooFewSamples {
            available: samples.len(),
            bins: n_bins,
        });
    }
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let groups: Vec<Vec<&ScoredSample>> = match binning {
        Binning::Quantile => {
            let base = sorted.len() / n_bins;
            let extra = sorted.len() % n_bins;
            let mut start = 0;
            (0..n_bins)
                .map(|i| {
                    let len = base + usize::from(i < extra);
                    let g = sorted[start..start + len].to_vec();
                    start += len;
                    g
                })
                .collect()
        }
        Binning::EqualWidth => {
            let lo = sorted[0].score;
            let hi = sorted[sorted.len() - 1].score;
            let width = (hi - lo) / n_bins as f64;
            let mut groups = vec![Vec::new(); n_bins];
            for s in sorted {
                let i = if width > 0.0 {
                    (((s.score - lo) / width) as usize).min(n_bins - 1)
                } else {
                    0
                };
                groups[i].push(s);
            }
            groups
        }
    };

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(index, g)| {
            let correct = g.iter().filter(|s| s.correct).count();
            ScoreBin {
                index,
                min_score: g.first().map_or(f64::NAN, |s| s.score),
                max_score: g.last().map_or(f64::NAN, |s| s.score),
                accuracy: (!g.is_empty()).then(|| correct as f64 / g.len() as f64),
                members: g.into_iter().map(|s| s.id.clone()).collect(),
            }
        })
        .collect())
}

/// Supplies detector verdicts for manifest records.
pub trait AuthenticityScorer: Sync {
    fn verdict(&self, record: &PromptImagePair) -> Result<Verdict>;
}

/// Scores records with a trained detector, loading images from disk.
pub struct DetectorScorer<'a> {
    pub model: &'a DetectorModel,
    pub encoder: Option<&'a dyn EncoderBackend>,
    pub captioner: Option<&'a dyn EncoderBackend>,
}

impl AuthenticityScorer for DetectorScorer<'_> {
    fn verdict(&self, record: &PromptImagePair) -> Result<Verdict> {
        let image = load_rgb(&record.image_path)?;
        let prompt = record.has_prompt().then_some(record.prompt.as_str());
        detect(self.model, &image, prompt, self.encoder, self.captioner)
    }
}

fn verdicts(records: &[PromptImagePair], scorer: &dyn AuthenticityScorer) -> Result<Vec<Verdict>> {
    records.par_iter().map(|r| scorer.verdict(r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAuthenticity {
    pub topic: String,
    pub n_prompts: usize,
    /// Share of this topic's generated images the detector calls real.
    pub real_proportion: f64,
}

/// Ranks topics by how often their generated images pass as real.
///
/// Only generated (non-real) records are scored. A record with several
/// topics counts toward each. Ties in proportion are ordered by topic name.
pub fn topic_authenticity(
    records: &[PromptImagePair],
    scorer: &dyn AuthenticityScorer,
) -> Result<Vec<TopicAuthenticity>> {
    let fakes: Vec<PromptImagePair> = records.iter().filter(|r| !r.origin.is_real()).cloned().collect();
    if let Some(r) = fakes.iter().find(|r| r.topics.is_empty()) {
        return Err(Error::NoTopics(r.id.clone()));
    }
    let verdicts = verdicts(&fakes, scorer)?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (r, v) in fakes.iter().zip(&verdicts) {
        for topic in &r.topics {
            let e = tally.entry(topic.as_str()).or_default();
            e.0 += 1;
            e.1 += usize::from(v.label == VerdictLabel::Real);
        }
    }
    let mut ranked: Vec<TopicAuthenticity> = tally
        .into_iter()
        .map(|(topic, (n, real))| TopicAuthenticity {
            topic: topic.to_string(),
            n_prompts: n,
            real_proportion: real as f64 / n as f64,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.real_proportion
            .total_cmp(&a.real_proportion)
            .then_with(|| a.topic.cmp(&b.topic))
    });
    Ok(ranked)
}

pub const NOISE: i64 = -1;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// DBSCAN labels under Euclidean distance; `-1` marks noise.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are numbered in order of their first core point.
/// Border points reachable from two clusters join the one found first, so
/// that case depends on input order.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
    }
    if let Some(first) = points.first() {
        if let Some(p) = points.iter().find(|p| p.len() != first.len()) {
            return Err(Error::DimMismatch {
                left: first.len(),
                right: p.len(),
            });
        }
    }
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| euclidean(&points[i], &points[j]) <= eps).collect())
        .collect();

    const UNVISITED: i64 = -2;
    let mut labels = vec![UNVISITED; n];
    let mut next = 0i64;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        if neighbours[i].len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = next;
        let mut queue: Vec<usize> = neighbours[i].clone();
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j] == NOISE {
                labels[j] = next;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = next;
            if neighbours[j].len() >= min_pts {
                queue.extend(&neighbours[j]);
            }
        }
        next += 1;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    pub id: String,
    pub embedding: Vec<f64>,
    /// Detector verdict for the prompt's generated image.
    pub classified_real: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: i64,
    pub members: Vec<String>,
    pub representatives: Vec<String>,
    pub real_proportion: f64,
}

pub const REPRESENTATIVES: usize = 3;

/// Clusters prompt embeddings and annotates each cluster. Clusters come in
/// id order with the noise group (id `-1`), if any, last.
pub fn cluster_prompts(points: &[ClusterPoint], eps: f64, min_pts: usize) -> Result<Vec<ClusterReport>> {
    let embeddings: Vec<Vec<f64>> = points.iter().map(|p| p.embedding.clone()).collect();
    let labels = dbscan(&embeddings, eps, min_pts)?;
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut reports: Vec<ClusterReport> = groups
        .into_iter()
        .map(|(cluster_id, idx)| {
            let dim = points[idx[0]].embedding.len();
            let mut mean = vec![0.0; dim];
            for &i in &idx {
                for (m, v) in mean.iter_mut().zip(&points[i].embedding) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
            let mut by_distance: Vec<(f64, usize)> = idx
                .iter()
                .map(|&i| (euclidean(&points[i].embedding, &mean), i))
                .collect();
            by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let real = idx.iter().filter(|&&i| points[i].classified_real).count();
            ClusterReport {
                cluster_id,
                members: idx.iter().map(|&i| points[i].id.clone()).collect(),
                representatives: by_distance
                    .iter()
                    .take(REPRESENTATIVES)
                    .map(|&(_, i)| points[i].id.clone())
                    .collect(),
                real_proportion: real as f64 / idx.len() as f64,
            }
        })
        .collect();
    reports.sort_by_key(|r| if r.cluster_id == NOISE { i64::MAX } else { r.cluster_id });
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartOfSpeech {
    Noun,
    Other,
}

/// Part-of-speech tagging for single tokens.
pub trait PosTagger: Sync {
    fn tag(&self, token: &str) -> PartOfSpeech;
}

/// Closed lexicon of function words and common caption verbs/adjectives,
/// a small noun lexicon, and suffix rules. Unknown words default to nouns,
/// the dominant open class in image captions.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconTagger;

const NON_NOUNS: &[&str] = &[
    // determiners and quantifiers
    "a",
    "an",
    "the",
    "this",
    "that",
    "these",
    "those",
    "some",
    "any",
    "each",
    "every",
    "either",
    "neither",
    "no",
    "all",
    "both",
    "few",
    "many",
    "much",
    "more",
    "most",
    "several",
    "another",
    "other",
    "such",
    "what",
    "which",
    "whose",
    "whatever",
    "whichever",
    "enough",
    "less",
    "least",
    "own",
    // pronouns
    "i",
    "me",
    "my",
    "mine",
    "myself",
    "you",
    "your",
    "yours",
    "yourself",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "we",
    "us",
    "our",
    "ours",
    "ourselves",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "who",
    "whom",
    "someone",
    "something",
    "anyone",
    "anything",
    "everyone",
    "everything",
    "nobody",
    "nothing",
    "one",
    "ones",
    // prepositions
    "about",
    "above",
    "across",
    "after",
    "against",
    "along",
    "alongside",
    "amid",
    "among",
    "around",
    "as",
    "at",
    "before",
    "behind",
    "below",
    "beneath",
    "beside",
    "besides",
    "between",
    "beyond",
    "by",
    "down",
    "during",
    "except",
    "for",
    "from",
    "in",
    "inside",
    "into",
    "like",
    "near",
    "next",
    "of",
    "off",
    "on",
    "onto",
    "out",
    "outside",
    "over",
    "past",
    "per",
    "through",
    "throughout",
    "to",
    "toward",
    "towards",
    "under",
    "underneath",
    "until",
    "up",
    "upon",
    "via",
    "with",
    "within",
    "without",
    "atop",
    // conjunctions and particles
    "and",
    "or",
    "but",
    "nor",
    "so",
    "yet",
    "if",
    "because",
    "while",
    "whereas",
    "although",
    "though",
    "than",
    "then",
    "when",
    "where",
    "whether",
    "not",
    "also",
    "just",
    "only",
    "very",
    "too",
    "there",
    "here",
    "how",
    "why",
    // auxiliaries and common caption verbs
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "has",
    "have",
    "had",
    "having",
    "do",
    "does",
    "did",
    "can",
    "could",
    "will",
    "would",
    "shall",
    "should",
    "may",
    "might",
    "must",
    "sits",
    "sit",
    "sat",
    "stands",
    "stand",
    "stood",
    "lies",
    "lie",
    "lay",
    "holds",
    "hold",
    "held",
    "looks",
    "look",
    "rides",
    "ride",
    "rode",
    "walks",
    "walk",
    "runs",
    "run",
    "ran",
    "eats",
    "eat",
    "ate",
    "plays",
    "play",
    "flies",
    "fly",
    "flew",
    "waits",
    "wait",
    "goes",
    "go",
    "went",
    "takes",
    "take",
    "took",
    "makes",
    "make",
    "made",
    "gets",
    "get",
    "got",
    "uses",
    "use",
    "wears",
    "wear",
    "wore",
    "carries",
    "carry",
    "shows",
    "show",
    "contains",
    "contain",
    "filled",
    "covered",
    "parked",
    "topped",
    "made",
    "seen",
    "taken",
    "seems",
    "appears",
    "watches",
    "watch",
    "throws",
    "throw",
    "catches",
    "catch",
    "swings",
    "swing",
    "kicks",
    "kick",
    "drives",
    "drive",
    "drinks",
    "drink",
    "poses",
    "pose",
    "hangs",
    "hang",
    "grazes",
    "graze",
    "leans",
    "lean",
    "rests",
    "rest",
    "displays",
    "display",
    "features",
    // adjectives and adverbs frequent in captions
    "big",
    "small",
    "large",
    "little",
    "tall",
    "short",
    "long",
    "old",
    "young",
    "new",
    "good",
    "great",
    "nice",
    "beautiful",
    "pretty",
    "cute",
    "happy",
    "empty",
    "full",
    "open",
    "closed",
    "wet",
    "dry",
    "hot",
    "cold",
    "warm",
    "dark",
    "bright",
    "clean",
    "dirty",
    "busy",
    "high",
    "low",
    "wide",
    "narrow",
    "top",
    "bottom",
    "front",
    "back",
    "left",
    "right",
    "middle",
    "first",
    "second",
    "third",
    "last",
    "same",
    "different",
    "various",
    "together",
    "red",
    "orange",
    "yellow",
    "green",
    "blue",
    "purple",
    "pink",
    "brown",
    "black",
    "white",
    "gray",
    "grey",
    "colorful",
    "wooden",
    "metal",
    "plastic",
    "glass",
    "fresh",
    "delicious",
    "sunny",
    "cloudy",
    "snowy",
    "grassy",
    "sandy",
    "rocky",
    "lush",
    "modern",
    "vintage",
    "fancy",
    "simple",
    "single",
    "double",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "outdoors",
    "indoors",
    "away",
    "close",
    "far",
    "almost",
    "still",
    "really",
    "quite",
    "well",
    "again",
    "each",
    "other",
];

const NOUNS: &[&str] = &[
    "dog",
    "cat",
    "mat",
    "man",
    "woman",
    "person",
    "people",
    "child",
    "boy",
    "girl",
    "table",
    "street",
    "car",
    "bus",
    "train",
    "plane",
    "horse",
    "zebra",
    "giraffe",
    "sheep",
    "cow",
    "bird",
    "bear",
    "elephant",
    "pizza",
    "cake",
    "plate",
    "bowl",
    "kitchen",
    "room",
    "bed",
    "couch",
    "field",
    "water",
    "beach",
    "snow",
    "skis",
    "snowboard",
    "surfboard",
    "skateboard",
    "frisbee",
    "kite",
    "clock",
    "sign",
    "phone",
    "laptop",
    "tree",
    "grass",
    "sky",
    "road",
    "city",
    "building",
    "window",
    "door",
    "food",
    "bathroom",
    "toilet",
    "sink",
    "umbrella",
];

impl PosTagger for LexiconTagger {
    fn tag(&self, token: &str) -> PartOfSpeech {
        let t = token.to_lowercase();
        if NOUNS.contains(&t.as_str()) {
            return PartOfSpeech::Noun;
        }
        if NON_NOUNS.contains(&t.as_str()) || t.chars().all(|c| c.is_ascii_digit()) {
            return PartOfSpeech::Other;
        }
        const NOUN_SUFFIXES: &[&str] = &[
            "tion", "sion", "ness", "ment", "ity", "ship", "hood", "ism", "ist", "ance", "ence",
        ];
        const OTHER_SUFFIXES: &[&str] = &[
            "ing", "ed", "ly", "ous", "ful", "ive", "able", "ible", "less", "ish", "ic",
        ];
        if NOUN_SUFFIXES.iter().any(|s| t.ends_with(s)) {
            return PartOfSpeech::Noun;
        }
        if t.len() > 4 && OTHER_SUFFIXES.iter().any(|s| t.ends_with(s)) {
            return PartOfSpeech::Other;
        }
        PartOfSpeech::Noun
    }
}

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Nouns over tokens under `tagger`.
pub fn noun_ratio(prompt: &str, tagger: &dyn PosTagger) -> Result<f64> {
    let tokens = tokenize(prompt);
    if tokens.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    let nouns = tokens.iter().filter(|t| tagger.tag(t) == PartOfSpeech::Noun).count();
    Ok(nouns as f64 / tokens.len() as f64)
}

/// Prompt length in characters, spaces included.
pub fn prompt_length(prompt: &str) -> usize {
    prompt.chars().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRow {
    pub id: String,
    pub length: usize,
    pub noun_ratio: f64,
    /// Detector probability that the generated image is real.
    pub authenticity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lower: f64,
    /// Exclusive; infinite for the last bin.
    pub upper: f64,
    pub count: usize,
    pub mean_authenticity: Option<f64>,
    pub real_proportion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub rows: Vec<StructureRow>,
    pub length_bins: Vec<BinSummary>,
    pub noun_ratio_bins: Vec<BinSummary>,
}

/// Bin edges for [`structure_report`]. Values below the first edge land in
/// the first bin; each edge opens a new bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureBins {
    pub length_edges: Vec<f64>,
    pub noun_ratio_edges: Vec<f64>,
}

impl Default for StructureBins {
    fn default() -> Self {
        Self {
            length_edges: vec![25.0, 50.0, 75.0, 100.0],
            noun_ratio_edges: vec![0.2, 0.4, 0.6, 0.8],
        }
    }
}

fn summarize(values: &[f64], rows: &[StructureRow], edges: &[f64]) -> Result<Vec<BinSummary>> {
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
    }
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(edges);
    bounds.push(f64::INFINITY);
    let mut sums = vec![(0usize, 0.0f64, 0usize); bounds.len() - 1];
    for (v, row) in values.iter().zip(rows) {
        let i = edges.iter().take_while(|e| **e <= *v).count();
        sums[i].0 += 1;
        sums[i].1 += row.authenticity;
        sums[i].2 += usize::from(row.authenticity > 0.5);
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, auth, real))| BinSummary {
            lower: if i == 0 { 0.0 } else { bounds[i] },
            upper: bounds[i + 1],
            count,
            mean_authenticity: (count > 0).then(|| auth / count as f64),
            real_proportion: (count > 0).then(|| real as f64 / count as f64),
        })
        .collect())
}

/// Per-prompt length, noun ratio and authenticity, with binned averages.
/// Records are expected to be generated images with their prompts.
pub fn structure_report(
    records: &[PromptImagePair],
    scorer: &dyn AuthenticityScorer,
    tagger: &dyn PosTagger,
    bins: &StructureBins,
) -> Result<StructureReport> {
    if let Some(r) = records.iter().find(|r| !r.has_prompt()) {
        return Err(Error::PromptMissing(r.id.clone()));
    }
    let verdicts = verdicts(records, scorer)?;
    let rows = records
        .iter()
        .zip(&verdicts)
        .map(|(r, v)| {
            Ok(StructureRow {
                id: r.id.clone(),
                length: prompt_length(&r.prompt),
                noun_ratio: noun_ratio(&r.prompt, tagger)?,
                authenticity: v.real_probability(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lengths: Vec<f64> = rows.iter().map(|r| r.length as f64).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.noun_ratio).collect();
    Ok(StructureReport {
        length_bins: summarize(&lengths, &rows, &bins.length_edges)?,
        noun_ratio_bins: summarize(&ratios, &rows, &bins.noun_ratio_edges)?,
        rows,
    })
}
