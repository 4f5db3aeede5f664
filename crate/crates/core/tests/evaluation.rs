//! Cross-source evaluation and training-size ablation.

mod common;

use common::{hybrid_options, perceptron_separates, synthetic, toy_hybrid_features};
use promptprint::dataset::{build_detection_split, Origin};
use promptprint::detection::train_detector;
use promptprint::encoders::ToyBackend;
use promptprint::evaluation::{cross_matrix, size_ablation, CrossMatrixOptions, Task, FIRST_PROMPT_NOTE};
use promptprint::pipeline::Mode;
use promptprint::synthetic::FixtureSpec;
use promptprint::Error;

fn corpus(tag: &str, seed: u64, per_origin: usize) -> (tempfile::TempDir, promptprint::dataset::DatasetManifest) {
    let mut spec = FixtureSpec::new(
        vec![
            (Origin::Real, per_origin),
            (Origin::SD, per_origin),
            (Origin::LD, per_origin),
        ],
        seed,
    );
    spec.dataset_tag = tag.into();
    synthetic(&spec)
}

#[test]
fn detector_transfers_to_origins_sharing_the_marker() {
    let (_a, coco) = corpus("MSCOCO", 1, 160);
    let (_b, flickr) = corpus("Flickr30k", 2, 160);
    let ids: Vec<&str> = coco.records.iter().map(|r| r.id.as_str()).collect();
    let labels: Vec<usize> = coco.records.iter().map(|r| usize::from(r.origin.is_real())).collect();
    assert!(perceptron_separates(
        &toy_hybrid_features(&coco, &ids),
        &labels,
        2,
        1000
    ));

    let split = build_detection_split(&coco, &Origin::SD, 100, 3).unwrap();
    let toy = ToyBackend::new();
    let mut options = hybrid_options(3, 50);
    options.train_source = "SD+MSCOCO".into();
    let (model, _) = train_detector(&coco, &split, Mode::Hybrid, Some(&toy), &options).unwrap();

    let cross = CrossMatrixOptions {
        n_per_class: 40,
        seed: 5,
        exclude: split.all_ids(),
    };
    let manifests = [coco.clone(), flickr];
    let rows = cross_matrix(
        model.inner(),
        &manifests,
        &[Origin::SD, Origin::LD],
        &cross,
        Some(&toy),
        None,
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    let cells: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| (r.eval_origin.as_str(), r.dataset_tag.as_str()))
        .collect();
    assert_eq!(
        cells,
        vec![
            ("SD", "MSCOCO"),
            ("LD", "MSCOCO"),
            ("SD", "Flickr30k"),
            ("LD", "Flickr30k")
        ]
    );
    for r in &rows {
        assert!(
            r.accuracy >= 0.95,
            "{} on {}: {}",
            r.eval_origin,
            r.dataset_tag,
            r.accuracy
        );
        assert_eq!(r.n_total, 80);
        assert!(r.notes.iter().any(|n| n == FIRST_PROMPT_NOTE));
    }
    assert_eq!(rows[0].reference_accuracy, None);
    assert_eq!(rows[1].reference_accuracy, Some(0.932));

    let mut no_reals = coco.clone();
    no_reals.records.retain(|r| !r.origin.is_real());
    let no_reals = promptprint::dataset::DatasetManifest::from_records(no_reals.records, "x").unwrap();
    assert!(matches!(
        cross_matrix(model.inner(), &[no_reals], &[Origin::SD], &cross, Some(&toy), None),
        Err(Error::InsufficientRecords {
            origin: Origin::Real,
            ..
        })
    ));
}

#[test]
fn larger_training_sets_do_not_hurt_on_the_separable_fixture() {
    let (_dir, manifest) = corpus("SYNTH", 13, 120);
    let toy = ToyBackend::new();
    let task = Task::Detection {
        fake_origin: Origin::SD,
    };
    let sizes = [8, 32, 128];

    let mut means = [0.0; 3];
    let seeds = [0u64, 1, 2];
    for seed in seeds {
        let rows = size_ablation(
            &manifest,
            &task,
            &sizes,
            50,
            Mode::Hybrid,
            Some(&toy),
            &hybrid_options(seed, 30),
        )
        .unwrap();
        assert_eq!(rows.len(), sizes.len());
        assert_eq!(rows.iter().map(|r| r.size).collect::<Vec<_>>(), sizes);
        assert!(rows.iter().all(|r| r.n_test == 100));
        if seed == 0 {
            assert!(rows.windows(2).all(|w| w[0].accuracy <= w[1].accuracy), "{rows:?}");
        }
        for (m, r) in means.iter_mut().zip(&rows) {
            *m += r.accuracy / seeds.len() as f64;
        }
    }
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");

    assert!(matches!(
        size_ablation(
            &manifest,
            &task,
            &[0],
            10,
            Mode::Hybrid,
            Some(&toy),
            &hybrid_options(0, 1)
        ),
        Err(Error::EmptyDataset)
    ));
}
