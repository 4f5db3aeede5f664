//! Fixtures and oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use image::RgbImage;
use promptprint::dataset::{load_manifest, DatasetManifest, Origin, PromptImagePair};
use promptprint::encoders::{EncoderBackend, ToyBackend};
use promptprint::nn::{ConvConfig, TrainConfig};
use promptprint::pipeline::ModelOptions;
use promptprint::synthetic::{generate, FixtureSpec};
use tempfile::TempDir;

/// Writes records and their images under a fresh directory and loads the
/// manifest back from disk.
pub fn materialize(items: Vec<(PromptImagePair, RgbImage)>) -> (TempDir, DatasetManifest) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("images")).unwrap();
    let mut records = Vec::with_capacity(items.len());
    for (record, image) in items {
        image.save(dir.path().join(&record.image_path)).unwrap();
        records.push(record);
    }
    let path = dir.path().join("manifest.jsonl");
    DatasetManifest::from_records(records, "fixture")
        .unwrap()
        .write(&path)
        .unwrap();
    let manifest = load_manifest(&path).unwrap();
    (dir, manifest)
}

pub fn synthetic(spec: &FixtureSpec) -> (TempDir, DatasetManifest) {
    materialize(generate(spec).unwrap())
}

pub fn solid(id: &str, origin: Origin, rgb: [u8; 3], size: u32) -> (PromptImagePair, RgbImage) {
    let record = PromptImagePair {
        id: id.into(),
        image_path: format!("images/{id}.png").into(),
        prompt: format!("a picture numbered {id}"),
        origin,
        dataset_tag: "SOLID".into(),
        topics: vec![],
    };
    (record, RgbImage::from_pixel(size, size, image::Rgb(rgb)))
}

/// Toy text hash slot of a single token.
pub fn slot(token: &str) -> usize {
    let f = ToyBackend::text_features(token);
    f.iter().position(|&v| v > 0.0).unwrap()
}

/// `n` marker tokens whose toy hash slots are pairwise distinct and unused
/// by every word of `prompts`.
pub fn free_slot_markers(prompts: &[&str], n: usize) -> Vec<String> {
    let mut taken: BTreeSet<usize> = prompts
        .iter()
        .flat_map(|p| p.split_whitespace())
        .map(|w| slot(&w.to_lowercase()))
        .collect();
    let mut out = Vec::new();
    for i in 0.. {
        if out.len() == n {
            break;
        }
        let token = format!("mark{i}");
        if taken.insert(slot(&token)) {
            out.push(token);
        }
        assert!(i < 10_000, "no free hash slots left");
    }
    out
}

/// Multi-class perceptron with a bias input. Returns true once an epoch
/// passes with no mistakes, which happens iff the data are linearly
/// separable (given enough epochs).
pub fn perceptron_separates(features: &[Vec<f64>], labels: &[usize], n_classes: usize, max_epochs: usize) -> bool {
    let dim = features[0].len() + 1;
    let mut w = vec![vec![0.0; dim]; n_classes];
    let score = |w: &[f64], x: &[f64]| w[dim - 1] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    for _ in 0..max_epochs {
        let mut mistakes = 0;
        for (x, &y) in features.iter().zip(labels) {
            let pred = (0..n_classes)
                .max_by(|&a, &b| score(&w[a], x).total_cmp(&score(&w[b], x)).then(b.cmp(&a)))
                .unwrap();
            if pred != y {
                mistakes += 1;
                for (k, &xi) in x.iter().enumerate() {
                    w[y][k] += xi;
                    w[pred][k] -= xi;
                }
                w[y][dim - 1] += 1.0;
                w[pred][dim - 1] -= 1.0;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

/// Image ‖ text toy embeddings for each record, computed without the
/// library's pipeline code.
pub fn toy_hybrid_features(manifest: &DatasetManifest, ids: &[&str]) -> Vec<Vec<f64>> {
    ids.iter()
        .map(|id| {
            let r = manifest.get(id).unwrap();
            let img = image::open(&r.image_path).unwrap().to_rgb8();
            let mut f = ToyBackend::image_features(&img).to_vec();
            f.extend(ToyBackend::text_features(&r.prompt));
            f
        })
        .collect()
}

pub fn hybrid_options(seed: u64, epochs: usize) -> ModelOptions {
    ModelOptions {
        train: TrainConfig {
            epochs,
            batch_size: 16,
            seed,
            ..TrainConfig::default()
        },
        hidden_dim: 32,
        ..ModelOptions::default()
    }
}

/// A conv net small enough to train in seconds on one core.
pub fn image_options(seed: u64, epochs: usize, n_classes: usize) -> ModelOptions {
    ModelOptions {
        train: TrainConfig {
            epochs,
            batch_size: 8,
            seed,
            ..TrainConfig::default()
        },
        conv: ConvConfig {
            in_channels: 3,
            input_size: 8,
            stem_channels: 8,
            block_channels: vec![8, 8],
            n_classes,
        },
        ..ModelOptions::default()
    }
}

/// Captioner that always answers with a fixed text.
pub struct EchoCaptioner(pub String);

impl EncoderBackend for EchoCaptioner {
    fn backend_id(&self) -> &str {
        "echo"
    }

    fn image_dim(&self) -> usize {
        1
    }

    fn text_dim(&self) -> usize {
        1
    }

    fn can_caption(&self) -> bool {
        true
    }

    fn embed_image(&self, _image: &RgbImage) -> promptprint::Result<Vec<f64>> {
        Ok(vec![0.0])
    }

    fn embed_text(&self, _prompt: &str) -> promptprint::Result<Vec<f64>> {
        Ok(vec![0.0])
    }

    fn caption(&self, _image: &RgbImage) -> promptprint::Result<String> {
        Ok(self.0.clone())
    }
}

pub fn ids(manifest: &DatasetManifest, origin: &Origin) -> Vec<String> {
    manifest
        .records
        .iter()
        .filter(|r| &r.origin == origin)
        .map(|r| r.id.clone())
        .collect()
}
