//! Exit codes, error reporting and output shapes of the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use promptprint::dataset::Origin;
use promptprint::synthetic::{write_fixture, FixtureSpec};
use serde_json::Value;

fn promptprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_promptprint"))
        .args(args)
        .env_remove("PROMPTPRINT_CACHE_DIR")
        .output()
        .unwrap()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(dir: &Path) -> PathBuf {
    write_fixture(
        &dir.join("data"),
        &FixtureSpec::new(vec![(Origin::Real, 12), (Origin::SD, 12)], 3),
    )
    .unwrap()
}

fn train_hybrid(manifest: &Path, out: &Path) {
    let status = promptprint(&[
        "train-detector",
        "--manifest",
        p(manifest),
        "--n-per-class",
        "10",
        "--mode",
        "hybrid",
        "--backend",
        "toy",
        "--seed",
        "1",
        "--epochs",
        "3",
        "--hidden-dim",
        "8",
        "--out",
        p(out),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = promptprint(&["train-detector", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["class"], "usage");
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = promptprint(&[
        "fingerprint",
        "--manifest",
        p(&dir.path().join("absent.jsonl")),
        "--source",
        "SD",
        "--out",
        p(&dir.path().join("fp.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_line(&out);
    assert_eq!(err["class"], "data");
    assert!(err["message"].as_str().unwrap().contains("absent.jsonl"));
}

#[test]
fn unknown_backend_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let out = promptprint(&[
        "prompt-analyze",
        "connection",
        "--manifest",
        p(&manifest),
        "--backend",
        "nonexistent",
        "--out",
        p(&dir.path().join("c.tsv")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["class"], "backend");
}

#[test]
fn detect_writes_one_json_line_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let model = dir.path().join("det.json");
    train_hybrid(&manifest, &model);
    for suffix in ["history", "split.json", "config.json"] {
        assert!(model.with_extension(suffix).exists(), "missing {suffix}");
    }

    let image = dir.path().join("data/images/SD-00000.png");
    let out = promptprint(&[
        "detect",
        "--model",
        p(&model),
        "--image",
        p(&image),
        "--prompt",
        "a cat on a table",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["id"], p(&image));
    assert!(v["label"] == "fake" || v["label"] == "real", "{v}");
    let confidence = v["confidence"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&confidence));
    assert_eq!(v["prompt_provenance"], "natural");

    // a hybrid model with neither prompt nor captioner cannot run
    let out = promptprint(&["detect", "--model", p(&model), "--image", p(&image)]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["error"], "CaptionUnsupported");
}

#[test]
fn embedding_cache_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let model = dir.path().join("det.json");
    train_hybrid(&manifest, &model);
    let cache = dir.path().join("cache");

    let run = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_promptprint"))
            .args([
                "detect",
                "--model",
                p(&model),
                "--manifest",
                p(&manifest),
                "--out",
                p(out),
            ])
            .env("PROMPTPRINT_CACHE_DIR", &cache)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read(out).unwrap()
    };
    let cold = run(&dir.path().join("cold.jsonl"));
    assert!(fs::read_dir(&cache).unwrap().count() > 0, "no cache file written");
    let warm = run(&dir.path().join("warm.jsonl"));
    assert_eq!(cold, warm);

    let uncached = promptprint(&["detect", "--model", p(&model), "--manifest", p(&manifest)]);
    assert_eq!(uncached.stdout, cold);
}
