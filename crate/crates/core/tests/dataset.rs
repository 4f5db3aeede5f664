//! Manifest loading and balanced split construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use promptprint::dataset::{
    build_attribution_split, build_detection_split, build_detection_split_with, load_manifest, DatasetManifest,
    DatasetSplit, LabelScheme, Origin, PromptImagePair, SplitOptions,
};
use promptprint::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(id: &str, image: &str, origin: &str) -> String {
    serde_json::json!({
        "id": id,
        "image_path": image,
        "prompt": format!("a photo of {id}"),
        "origin": origin,
        "dataset_tag": "MSCOCO",
    })
    .to_string()
}

fn write_image(dir: &Path, name: &str) {
    image::RgbImage::new(2, 2).save(dir.join(name)).unwrap();
}

fn record(id: String, origin: Origin) -> PromptImagePair {
    PromptImagePair {
        image_path: PathBuf::from(format!("{id}.png")),
        prompt: format!("prompt {id}"),
        id,
        origin,
        dataset_tag: "MSCOCO".into(),
        topics: vec![],
    }
}

#[test]
fn counts_origins_of_a_three_line_file() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "x.png");
    let text = [
        line("a", "x.png", "real"),
        line("b", "x.png", "real"),
        line("c", "x.png", "SD"),
    ]
    .join("\n");
    fs::write(dir.path().join("m.jsonl"), text).unwrap();
    let m = load_manifest(&dir.path().join("m.jsonl")).unwrap();
    assert_eq!(m.records.len(), 3);
    assert_eq!(m.counts_by_origin, BTreeMap::from([(Origin::Real, 2), (Origin::SD, 1)]));
    assert!(m.records.iter().all(|r| r.image_path.is_file()));
}

#[test]
fn duplicate_ids_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "x.png");
    let text = [line("x7", "x.png", "real"), line("x7", "x.png", "SD")].join("\n");
    fs::write(dir.path().join("m.jsonl"), text).unwrap();
    match load_manifest(&dir.path().join("m.jsonl")) {
        Err(Error::DuplicateId(id)) => assert_eq!(id, "x7"),
        other => panic!("expected DuplicateId, got {other:?}"),
    }
}

#[test]
fn malformed_lines_are_collected_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "x.png");
    let text = [
        line("a", "x.png", "real"),
        "{not json".to_string(),
        line("b", "missing.png", "SD"),
        r#"{"id":"c","image_path":"x.png","prompt":"p","dataset_tag":"t"}"#.to_string(),
    ]
    .join("\n");
    fs::write(dir.path().join("m.jsonl"), text).unwrap();
    let Err(Error::ManifestErrors(errors)) = load_manifest(&dir.path().join("m.jsonl")) else {
        panic!("expected a collected error report");
    };
    let lines: Vec<usize> = errors
        .iter()
        .map(|e| match e {
            Error::MalformedRecord { line, .. } => *line,
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    assert_eq!(lines, vec![2, 3, 4]);
}

#[test]
fn missing_manifest_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_manifest(&dir.path().join("nope.jsonl")),
        Err(Error::MissingFile(_))
    ));
}

#[test]
fn full_corpus_sized_manifest_is_not_truncated() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "shared.png");
    let mut text = String::new();
    for i in 0..59_247 {
        text.push_str(&line(&format!("sd-{i:05}"), "shared.png", "SD"));
        text.push('\n');
    }
    fs::write(dir.path().join("m.jsonl"), text).unwrap();
    let m = load_manifest(&dir.path().join("m.jsonl")).unwrap();
    assert_eq!(m.records.len(), 59_247);
    assert_eq!(m.count(&Origin::SD), 59_247);
    assert!(m.records.iter().all(|r| r.dataset_tag == "MSCOCO"));
}

#[test]
fn paper_scale_splits() {
    let mut records = Vec::new();
    for (prefix, origin) in [
        ("r", Origin::Real),
        ("s", Origin::SD),
        ("l", Origin::LD),
        ("g", Origin::Glide),
    ] {
        records.extend((0..20_000).map(|i| record(format!("{prefix}{i:05}"), origin.clone())));
    }
    let m = DatasetManifest::from_records(records, "memory").unwrap();

    let det = build_detection_split(&m, &Origin::SD, 20_000, 1).unwrap();
    assert_eq!(det.train.len() + det.test.len(), 40_000);
    assert_eq!(det.all_ids().len(), 40_000);

    let att = build_attribution_split(&m, 20_000, 1).unwrap();
    assert_eq!(att.train.len() + att.test.len(), 80_000);
    let all: Vec<_> = att.train.iter().chain(&att.test).cloned().collect();
    assert_eq!(DatasetSplit::class_counts(&all, 4), vec![20_000; 4]);
}

#[test]
fn attribution_split_on_small_manifest_and_missing_class() {
    let mut records = Vec::new();
    for (prefix, origin) in [
        ("r", Origin::Real),
        ("s", Origin::SD),
        ("l", Origin::LD),
        ("g", Origin::Glide),
    ] {
        records.extend((0..3).map(|i| record(format!("{prefix}{i}"), origin.clone())));
    }
    let m = DatasetManifest::from_records(records.clone(), "memory").unwrap();
    let s = build_attribution_split(&m, 2, 0).unwrap();
    assert_eq!(s.train.len() + s.test.len(), 8);

    records.retain(|r| r.origin != Origin::Glide);
    let m = DatasetManifest::from_records(records, "memory").unwrap();
    match build_attribution_split(&m, 2, 0) {
        Err(Error::InsufficientRecords {
            origin,
            available,
            requested,
        }) => assert_eq!((origin, available, requested), (Origin::Glide, 0, 2)),
        other => panic!("expected InsufficientRecords, got {other:?}"),
    }
}

fn random_manifest(rng: &mut ChaCha8Rng) -> DatasetManifest {
    let origins = [Origin::Real, Origin::SD, Origin::LD, Origin::Glide, Origin::Dalle2];
    let mut records = Vec::new();
    for (k, origin) in origins.iter().enumerate() {
        let n = rng.random_range(0..40);
        records.extend((0..n).map(|i| record(format!("{k}-{i:03}-{}", rng.random_range(0..1000)), origin.clone())));
    }
    records.shuffle(rng);
    DatasetManifest::from_records(records, "memory").unwrap()
}

fn check_invariants(m: &DatasetManifest, s: &DatasetSplit, n_per_class: usize) {
    let n_classes = s.label_scheme.n_classes();
    let train_ids: BTreeSet<_> = s.train.iter().map(|e| &e.id).collect();
    let test_ids: BTreeSet<_> = s.test.iter().map(|e| &e.id).collect();
    assert!(train_ids.is_disjoint(&test_ids));
    assert_eq!(train_ids.len(), s.train.len());
    assert_eq!(test_ids.len(), s.test.len());
    let all: Vec<_> = s.train.iter().chain(&s.test).cloned().collect();
    assert_eq!(
        DatasetSplit::class_counts(&all, n_classes),
        vec![n_per_class; n_classes]
    );
    let train_counts = DatasetSplit::class_counts(&s.train, n_classes);
    assert!(train_counts.iter().all(|&c| c == train_counts[0]));
    for e in &all {
        assert!(e.label < n_classes);
        let origin = &m.get(&e.id).unwrap().origin;
        match s.label_scheme {
            LabelScheme::Detection => assert_eq!(e.label == 1, origin.is_real()),
            _ => assert_eq!(LabelScheme::attribution_label(origin), Some(e.label)),
        }
    }
}

#[test]
fn random_manifests_yield_balanced_disjoint_deterministic_splits() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for _ in 0..100 {
        let m = random_manifest(&mut rng);
        let seed = rng.random::<u64>();
        let n = rng.random_range(0..12);
        let fake = [Origin::SD, Origin::LD, Origin::Glide, Origin::Dalle2][rng.random_range(0..4)].clone();

        let det = build_detection_split(&m, &fake, n, seed);
        let available = m.count(&fake).min(m.count(&Origin::Real));
        assert_eq!(det.is_ok(), available >= n);
        if let Ok(split) = det {
            check_invariants(&m, &split, n);
            assert_eq!(build_detection_split(&m, &fake, n, seed).unwrap(), split);
            let mut reordered = m.records.clone();
            reordered.reverse();
            let m2 = DatasetManifest::from_records(reordered, "memory").unwrap();
            assert_eq!(build_detection_split(&m2, &fake, n, seed).unwrap(), split);
            checked += 1;
        }

        if let Ok(split) = build_attribution_split(&m, n, seed) {
            check_invariants(&m, &split, n);
            assert_eq!(build_attribution_split(&m, n, seed).unwrap(), split);
        }
    }
    assert!(checked > 50, "only {checked} detection cases were feasible");
}

#[test]
fn holdout_fraction_and_exclusions() {
    let mut records = Vec::new();
    records.extend((0..50).map(|i| record(format!("r{i:02}"), Origin::Real)));
    records.extend((0..50).map(|i| record(format!("s{i:02}"), Origin::SD)));
    let m = DatasetManifest::from_records(records, "memory").unwrap();

    let s = build_detection_split(&m, &Origin::SD, 20, 3).unwrap();
    assert_eq!((s.train.len(), s.test.len()), (32, 8));

    let exclude: BTreeSet<String> = s.all_ids();
    let opts = SplitOptions {
        holdout_fraction: 1.0,
        exclude: exclude.clone(),
    };
    let eval = build_detection_split_with(&m, &Origin::SD, 30, 3, &opts).unwrap();
    assert!(eval.train.is_empty());
    assert!(eval.all_ids().is_disjoint(&exclude));
    assert!(matches!(
        build_detection_split_with(&m, &Origin::SD, 31, 3, &opts),
        Err(Error::InsufficientRecords { available: 30, .. })
    ));
}
