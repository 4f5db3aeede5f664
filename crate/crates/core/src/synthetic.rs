//! Seeded synthetic corpora for demos and tests.
//!
//! Every record gets a noise image and a short caption-like prompt. Two
//! optional signals make origins separable: a marker token appended to the
//! prompts of generated images, and a per-origin colour tint. With markers
//! off, record `k` of every origin shares the same prompt, which pairs real
//! and generated images for connection analysis.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{DatasetManifest, Origin, PromptImagePair};
use crate::encoders::fnv1a64;
use crate::error::{Error, Result};

/// Token appended to generated-image prompts when markers are on. Its toy
/// hash slot is not shared by any filler word.
pub const MARKER: &str = "sdmark";

const NOUNS: &[(&str, &str)] = &[
    ("person", "person"),
    ("man", "person"),
    ("dog", "animal"),
    ("cat", "animal"),
    ("horse", "animal"),
    ("bird", "animal"),
    ("zebra", "animal"),
    ("giraffe", "animal"),
    ("car", "vehicle"),
    ("bus", "vehicle"),
    ("train", "vehicle"),
    ("pizza", "food"),
    ("food", "food"),
    ("plate", "food"),
    ("street", "scene"),
    ("table", "scene"),
    ("kitchen", "scene"),
    ("field", "scene"),
    ("beach", "scene"),
    ("tree", "scene"),
];
const LINKS: &[&str] = &["on", "in", "near", "with"];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    /// Records to generate per origin.
    pub counts: Vec<(Origin, usize)>,
    pub image_size: u32,
    pub seed: u64,
    pub dataset_tag: String,
    /// Append [`MARKER`] to prompts of generated images.
    pub markers: bool,
    /// Shift each origin's colours by [`tint`].
    pub tints: bool,
}

impl FixtureSpec {
    pub fn new(counts: Vec<(Origin, usize)>, seed: u64) -> Self {
        Self {
            counts,
            image_size: 16,
            seed,
            dataset_tag: "SYNTH".into(),
            markers: true,
            tints: false,
        }
    }
}

/// Per-channel offset applied to an origin's pixels when tints are on.
pub fn tint(origin: &Origin) -> [i32; 3] {
    match origin {
        Origin::Real => [0, 0, 0],
        Origin::SD => [70, 0, 0],
        Origin::LD => [0, 70, 0],
        Origin::Glide => [0, 0, 70],
        Origin::Dalle2 => [70, 70, 0],
        Origin::Other(_) => [35, 35, 35],
    }
}

fn record_rng(seed: u64, salt: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(salt.as_bytes()))
}

/// Prompt and topics of scene `k`, identical across origins.
pub fn scene(seed: u64, k: usize) -> (String, Vec<String>) {
    let mut rng = record_rng(seed, &format!("scene-{k}"));
    let n_objects = rng.random_range(1..=3);
    let mut words = vec!["a".to_string()];
    let mut topics = BTreeSet::new();
    for i in 0..n_objects {
        if i > 0 {
            words.push(LINKS[rng.random_range(0..LINKS.len())].to_string());
            words.push("the".to_string());
        }
        let (noun, topic) = NOUNS[rng.random_range(0..NOUNS.len())];
        words.push(noun.to_string());
        topics.insert(topic.to_string());
    }
    (words.join(" "), topics.into_iter().collect())
}

/// Noise image for one record: channels uniform in [60, 160] plus the
/// origin's tint.
pub fn noise_image(seed: u64, id: &str, size: u32, offset: [i32; 3]) -> RgbImage {
    let mut rng = record_rng(seed, id);
    RgbImage::from_fn(size, size, |_, _| {
        Rgb(std::array::from_fn(|c| {
            (rng.random_range(60..=160) + offset[c]).clamp(0, 255) as u8
        }))
    })
}

/// In-memory records and images; image paths are `images/<id>.png`.
pub fn generate(spec: &FixtureSpec) -> Result<Vec<(PromptImagePair, RgbImage)>> {
    if spec.image_size == 0 {
        return Err(Error::InvalidParameter("image size must be positive".into()));
    }
    let jobs: Vec<(Origin, usize)> = spec
        .counts
        .iter()
        .flat_map(|(o, n)| (0..*n).map(move |k| (o.clone(), k)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|(origin, k)| {
            let id = format!("{origin}-{k:05}");
            let (mut prompt, topics) = scene(spec.seed, *k);
            if spec.markers && !origin.is_real() {
                prompt.push(' ');
                prompt.push_str(MARKER);
            }
            let offset = if spec.tints { tint(origin) } else { [0; 3] };
            let image = noise_image(spec.seed, &id, spec.image_size, offset);
            let record = PromptImagePair {
                image_path: PathBuf::from(format!("images/{id}.png")),
                id,
                prompt,
                origin: origin.clone(),
                dataset_tag: spec.dataset_tag.clone(),
                topics,
            };
            (record, image)
        })
        .collect())
}

/// Writes images and `manifest.jsonl` under `dir`; returns the manifest path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    let items = generate(spec)?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    items.par_iter().try_for_each(|(record, image)| {
        let path = dir.join(&record.image_path);
        image.save(&path).map_err(|e| Error::UnwritablePath {
            path: path.clone(),
            reason: e.to_string(),
        })
    })?;
    let manifest =
        DatasetManifest::from_records(items.into_iter().map(|(r, _)| r).collect(), dir.display().to_string())?;
    let path = dir.join("manifest.jsonl");
    manifest.write(&path)?;
    Ok(path)
}
