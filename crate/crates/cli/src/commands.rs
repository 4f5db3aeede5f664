//! Subcommand implementations. Every command that writes files also writes
//! a `<out>.config.json` echo of the parsed flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use promptprint::attribution::{
    attribute, attribute_records, attributions_to_jsonl, default_threshold_grid, sweep_thresholds, train_attributor,
    AttributorModel,
};
use promptprint::dataset::{
    build_attribution_split_with, build_detection_split_with, build_open_set_split, load_manifest, sample_origin,
    DatasetManifest, DatasetSplit, PromptImagePair, SplitOptions,
};
use promptprint::detection::{
    detect, detect_records, detections_to_jsonl, train_detector, DetectorModel, VerdictLabel,
};
use promptprint::encoders::{backend_by_name, encode_text, CachedBackend, EmbeddingCache, EncoderBackend};
use promptprint::evaluation::{cross_matrix, size_ablation, CrossMatrixOptions, Task};
use promptprint::fingerprint::{average_spectrum_rgb, render_spectrum};
use promptprint::nn::{ConvConfig, TrainConfig};
use promptprint::pipeline::{Mode, ModelOptions, TrainedModel};
use promptprint::plot::{histogram, save_bar_chart, save_line_chart, ChartSize};
use promptprint::prompt_analysis::{
    bin_by_descriptiveness, cluster_prompts, connection_distribution, descriptiveness, structure_report,
    topic_authenticity, AuthenticityScorer, Binning, ClusterPoint, DetectorScorer, LexiconTagger, ScoredSample,
    StructureBins,
};
use promptprint::raster::load_rgb;
use promptprint::table::write_tsv;
use promptprint::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;

/// Directory holding persistent embedding caches; caching is off when unset.
pub const CACHE_DIR_ENV: &str = "PROMPTPRINT_CACHE_DIR";

type Encoder = CachedBackend<Box<dyn EncoderBackend>>;

fn cache_path(dir: &Path, backend_id: &str) -> PathBuf {
    dir.join(format!("{backend_id}.embeddings.jsonl"))
}

/// A backend wrapped in the embedding cache. Cached values are rounded the
/// same way whether or not a cache directory is configured.
fn open_backend(name: &str) -> Result<Encoder> {
    let inner = backend_by_name(name)?;
    let cache = match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) => EmbeddingCache::load(&cache_path(Path::new(&dir), inner.backend_id()))?,
        None => EmbeddingCache::new(),
    };
    Ok(CachedBackend::with_cache(inner, cache))
}

fn persist(encoder: Option<&Encoder>) -> Result<()> {
    let (Some(encoder), Some(dir)) = (encoder, std::env::var_os(CACHE_DIR_ENV)) else {
        return Ok(());
    };
    let dir = PathBuf::from(dir);
    fs::create_dir_all(&dir).map_err(|e| unwritable(&dir, e))?;
    encoder.snapshot().save(&cache_path(&dir, encoder.backend_id()))
}

fn as_dyn(encoder: &Option<Encoder>) -> Option<&dyn EncoderBackend> {
    encoder.as_ref().map(|e| e as &dyn EncoderBackend)
}

fn unwritable(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::UnwritablePath {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| unwritable(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

/// `out` with `suffix` replacing its extension, e.g. `d.model` -> `d.history`.
fn beside(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    version: &'static str,
    run: &'a Cli,
}

fn echo_config(cli: &Cli, out: &Path) -> Result<()> {
    write_json(
        &beside(out, "config.json"),
        &ConfigEcho {
            version: env!("CARGO_PKG_VERSION"),
            run: cli,
        },
    )
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidParameter("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let out = match &cli.command {
        Command::TrainDetector(a) => train_detector_cmd(a)?,
        Command::TrainAttributor(a) => train_attributor_cmd(a)?,
        Command::Detect(a) => detect_cmd(a)?,
        Command::Attribute(a) => attribute_cmd(a)?,
        Command::Eval(EvalCommand::Cross(a)) => cross_cmd(a)?,
        Command::Eval(EvalCommand::Ablation(a)) => ablation_cmd(a)?,
        Command::Fingerprint(a) => fingerprint_cmd(a)?,
        Command::PromptAnalyze(c) => match c {
            AnalyzeCommand::Connection(a) => connection_cmd(a)?,
            AnalyzeCommand::Descriptiveness(a) => descriptiveness_cmd(a)?,
            AnalyzeCommand::Topics(a) => topics_cmd(a)?,
            AnalyzeCommand::Cluster(a) => cluster_cmd(a)?,
            AnalyzeCommand::Structure(a) => structure_cmd(a)?,
        },
    };
    if let Some(out) = out {
        echo_config(cli, &out)?;
    }
    Ok(())
}

fn training_backend(params: &TrainParams) -> Result<Option<Encoder>> {
    match (params.mode, &params.backend) {
        (ModeArg::Hybrid, None) => Err(Error::ModeMismatch("hybrid mode requires --backend".into())),
        (ModeArg::Hybrid, Some(name)) => open_backend(name).map(Some),
        (ModeArg::ImageOnly, _) => Ok(None),
    }
}

fn model_options(params: &TrainParams, n_classes: usize, default_source: String) -> ModelOptions {
    ModelOptions {
        train: TrainConfig {
            epochs: params.epochs,
            batch_size: params.batch_size,
            learning_rate: params.learning_rate,
            momentum: params.momentum,
            seed: params.seed,
            clip_norm: (params.clip_norm > 0.0).then_some(params.clip_norm),
        },
        hidden_dim: params.hidden_dim,
        conv: ConvConfig {
            input_size: params.input_size,
            ..ConvConfig::desk(n_classes)
        },
        normalize_embeddings: params.normalize_embeddings,
        train_source: params.train_source.clone().unwrap_or(default_source),
    }
}

fn dataset_tags(manifest: &DatasetManifest) -> String {
    let tags: std::collections::BTreeSet<&str> = manifest.records.iter().map(|r| r.dataset_tag.as_str()).collect();
    tags.into_iter().collect::<Vec<_>>().join("+")
}

fn split_options(holdout: f64) -> SplitOptions {
    SplitOptions {
        holdout_fraction: holdout,
        ..SplitOptions::default()
    }
}

fn write_training_outputs<M: Serialize>(
    out: &Path,
    save: impl FnOnce(&Path) -> Result<()>,
    history: &M,
    split: &DatasetSplit,
) -> Result<()> {
    save(out)?;
    write_json(&beside(out, "history"), history)?;
    write_json(&beside(out, "split.json"), split)
}

fn train_detector_cmd(a: &TrainDetectorArgs) -> Result<Option<PathBuf>> {
    let backend = training_backend(&a.params)?;
    let manifest = load_manifest(&a.manifest)?;
    let split = build_detection_split_with(
        &manifest,
        &a.fake_origin,
        a.n_per_class,
        a.params.seed,
        &split_options(a.holdout),
    )?;
    let options = model_options(&a.params, 2, format!("{}+{}", a.fake_origin, dataset_tags(&manifest)));
    let (model, history) = train_detector(&manifest, &split, a.params.mode.into(), as_dyn(&backend), &options)?;
    if let Some(last) = history.epochs.last() {
        info!(
            "final train accuracy {:.4}, holdout {:?}",
            last.train_accuracy, last.holdout_accuracy
        );
    }
    write_training_outputs(&a.out, |p| model.save(p), &history, &split)?;
    persist(backend.as_ref())?;
    Ok(Some(a.out.clone()))
}

fn train_attributor_cmd(a: &TrainAttributorArgs) -> Result<Option<PathBuf>> {
    let backend = training_backend(&a.params)?;
    let manifest = load_manifest(&a.manifest)?;
    let split = build_attribution_split_with(&manifest, a.n_per_class, a.params.seed, &split_options(a.holdout))?;
    let options = model_options(&a.params, 4, dataset_tags(&manifest));
    let (model, history) = train_attributor(&manifest, &split, a.params.mode.into(), as_dyn(&backend), &options)?;
    write_training_outputs(&a.out, |p| model.save(p), &history, &split)?;
    persist(backend.as_ref())?;
    Ok(Some(a.out.clone()))
}

/// Encoder for a trained model: `--backend` if given, else the recorded one.
fn model_encoder(model: &TrainedModel, requested: Option<&str>) -> Result<Option<Encoder>> {
    if model.mode == Mode::ImageOnly {
        return Ok(None);
    }
    let name = match (requested, &model.backend) {
        (Some(name), _) => name.to_string(),
        (None, Some(info)) => info.backend_id.clone(),
        (None, None) => {
            return Err(Error::ModeMismatch(
                "hybrid model records no backend; pass --backend".into(),
            ))
        }
    };
    let encoder = open_backend(&name)?;
    model.check_backend(Some(&encoder))?;
    Ok(Some(encoder))
}

fn captioner(name: Option<&str>) -> Result<Option<Box<dyn EncoderBackend>>> {
    name.map(backend_by_name).transpose()
}

fn image_id(path: &Path) -> String {
    path.display().to_string()
}

fn no_inputs() -> Error {
    Error::InvalidParameter("pass --image or --manifest".into())
}

fn detect_cmd(a: &DetectArgs) -> Result<Option<PathBuf>> {
    let input = &a.input;
    let model = DetectorModel::load(&input.model)?;
    let encoder = model_encoder(model.inner(), input.backend.as_deref())?;
    let captioner = captioner(input.captioner.as_deref())?;
    let records = if let Some(path) = &input.manifest {
        let manifest = load_manifest(path)?;
        let refs: Vec<&PromptImagePair> = manifest.records.iter().collect();
        detect_records(&model, &refs, as_dyn(&encoder), captioner.as_deref())?
    } else if input.image.is_empty() {
        return Err(no_inputs());
    } else {
        input
            .image
            .par_iter()
            .map(|path| {
                let image = load_rgb(path)?;
                let v = detect(
                    &model,
                    &image,
                    input.prompt.as_deref(),
                    as_dyn(&encoder),
                    captioner.as_deref(),
                )?;
                Ok(promptprint::detection::DetectionRecord {
                    id: image_id(path),
                    label: v.label,
                    confidence: v.confidence,
                    prompt_provenance: v.prompt_provenance,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    emit(input.out.as_deref(), &detections_to_jsonl(&records))?;
    persist(encoder.as_ref())?;
    Ok(input.out.clone())
}

fn attribute_cmd(a: &AttributeArgs) -> Result<Option<PathBuf>> {
    let input = &a.input;
    let model = AttributorModel::load(&input.model)?;
    let encoder = model_encoder(model.inner(), input.backend.as_deref())?;
    let captioner = captioner(input.captioner.as_deref())?;
    let text = if a.sweep {
        let path = input.manifest.as_ref().ok_or_else(no_inputs)?;
        let manifest = load_manifest(path)?;
        let split = build_open_set_split(
            &manifest,
            &a.unseen,
            a.n_per_class,
            a.seed,
            &SplitOptions::evaluation_only(),
        )?;
        let rows = sweep_thresholds(
            &model,
            &manifest,
            &split,
            &default_threshold_grid(),
            as_dyn(&encoder),
            captioner.as_deref(),
        )?;
        promptprint::table::to_tsv(&rows)?
    } else if let Some(path) = &input.manifest {
        let manifest = load_manifest(path)?;
        let refs: Vec<&PromptImagePair> = manifest.records.iter().collect();
        let records = attribute_records(&model, &refs, as_dyn(&encoder), captioner.as_deref(), a.threshold)?;
        attributions_to_jsonl(&records)
    } else if input.image.is_empty() {
        return Err(no_inputs());
    } else {
        let records = input
            .image
            .par_iter()
            .map(|path| {
                let image = load_rgb(path)?;
                let r = attribute(
                    &model,
                    &image,
                    input.prompt.as_deref(),
                    as_dyn(&encoder),
                    captioner.as_deref(),
                    a.threshold,
                )?;
                Ok(promptprint::attribution::AttributionRecord {
                    id: image_id(path),
                    source: r.source,
                    confidence: r.confidence,
                    threshold_used: r.threshold_used,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        attributions_to_jsonl(&records)
    };
    emit(input.out.as_deref(), &text)?;
    persist(encoder.as_ref())?;
    Ok(input.out.clone())
}

#[derive(Serialize)]
struct CrossTableRow<'a> {
    train_source: &'a str,
    eval_origin: &'a str,
    dataset_tag: &'a str,
    accuracy: f64,
    n_total: usize,
    reference_accuracy: Option<f64>,
    notes: String,
}

#[derive(Serialize)]
struct Summary<'a, R> {
    model_digest: Option<String>,
    rows: &'a [R],
}

fn cross_cmd(a: &CrossArgs) -> Result<Option<PathBuf>> {
    let model = TrainedModel::load(&a.model)?;
    let encoder = model_encoder(&model, a.backend.as_deref())?;
    let captioner = captioner(a.captioner.as_deref())?;
    let manifests = a
        .manifest
        .iter()
        .map(|p| load_manifest(p))
        .collect::<Result<Vec<_>>>()?;
    let exclude = match &a.exclude_split {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let split: DatasetSplit = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
            split.all_ids()
        }
        None => Default::default(),
    };
    let options = CrossMatrixOptions {
        n_per_class: a.n_per_class,
        seed: a.seed,
        exclude,
    };
    let rows = cross_matrix(
        &model,
        &manifests,
        &a.eval_origin,
        &options,
        as_dyn(&encoder),
        captioner.as_deref(),
    )?;
    let table: Vec<CrossTableRow> = rows
        .iter()
        .map(|r| CrossTableRow {
            train_source: &r.train_source,
            eval_origin: &r.eval_origin,
            dataset_tag: &r.dataset_tag,
            accuracy: r.accuracy,
            n_total: r.n_total,
            reference_accuracy: r.reference_accuracy,
            notes: r.notes.join("; "),
        })
        .collect();
    write_tsv(&a.out, &table)?;
    write_json(
        &beside(&a.out, "summary.json"),
        &Summary {
            model_digest: Some(model.digest()),
            rows: &rows,
        },
    )?;
    persist(encoder.as_ref())?;
    Ok(Some(a.out.clone()))
}

fn ablation_cmd(a: &AblationArgs) -> Result<Option<PathBuf>> {
    let backend = training_backend(&a.params)?;
    let manifest = load_manifest(&a.manifest)?;
    let (task, source) = match a.task {
        TaskArg::Detection => (
            Task::Detection {
                fake_origin: a.fake_origin.clone(),
            },
            format!("{}+{}", a.fake_origin, dataset_tags(&manifest)),
        ),
        TaskArg::Attribution => (Task::Attribution, dataset_tags(&manifest)),
    };
    let options = model_options(&a.params, task.scheme().n_classes(), source);
    let rows = size_ablation(
        &manifest,
        &task,
        &a.sizes,
        a.test_per_class,
        a.params.mode.into(),
        as_dyn(&backend),
        &options,
    )?;
    write_tsv(&a.out, &rows)?;
    write_json(
        &beside(&a.out, "summary.json"),
        &Summary {
            model_digest: None,
            rows: &rows,
        },
    )?;
    if let Some(plot) = &a.plot {
        let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
        save_line_chart(&acc, ChartSize::default(), plot)?;
    }
    persist(backend.as_ref())?;
    Ok(Some(a.out.clone()))
}

fn fingerprint_cmd(a: &FingerprintArgs) -> Result<Option<PathBuf>> {
    let manifest = load_manifest(&a.manifest)?;
    let records = sample_origin(&manifest, &a.source, a.n, a.seed)?;
    let images = records
        .par_iter()
        .map(|r| load_rgb(&r.image_path))
        .collect::<Result<Vec<_>>>()?;
    let fp = average_spectrum_rgb(&images, a.source.clone(), a.size.map(|s| (s, s)))?;
    fp.save(&a.out)?;
    let render = a.render.clone().unwrap_or_else(|| beside(&a.out, "png"));
    render_spectrum(&fp, &render)?;
    info!("averaged {} {} images at {:?}", fp.n_images, a.source, fp.resolution());
    Ok(Some(a.out.clone()))
}

fn load_detector(r: &DetectorRef) -> Result<(DetectorModel, Option<Encoder>)> {
    let model = DetectorModel::load(&r.model)?;
    let encoder = model_encoder(model.inner(), r.detector_backend.as_deref())?;
    Ok((model, encoder))
}

fn scorer<'a>(model: &'a DetectorModel, encoder: &'a Option<Encoder>) -> DetectorScorer<'a> {
    DetectorScorer {
        model,
        encoder: as_dyn(encoder),
        captioner: None,
    }
}

/// Generated images that carry a prompt, in manifest order.
fn prompted_fakes(manifest: &DatasetManifest) -> Vec<PromptImagePair> {
    manifest
        .records
        .iter()
        .filter(|r| !r.origin.is_real() && r.has_prompt())
        .cloned()
        .collect()
}

#[derive(Serialize)]
struct ConnectionRow<'a> {
    prompt_id: &'a str,
    real_id: &'a str,
    p_real: f64,
    p_fake: f64,
}

fn connection_cmd(a: &ConnectionArgs) -> Result<Option<PathBuf>> {
    let backend = open_backend(&a.backend)?;
    let manifest = load_manifest(&a.manifest)?;
    let mut real_by_prompt: BTreeMap<&str, &PromptImagePair> = BTreeMap::new();
    for r in manifest.records.iter().filter(|r| r.origin.is_real() && r.has_prompt()) {
        real_by_prompt
            .entry(r.prompt.as_str())
            .and_modify(|cur| {
                if r.id < cur.id {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let pairs: Vec<(&PromptImagePair, &PromptImagePair)> = manifest
        .records
        .iter()
        .filter(|r| r.origin == a.fake_origin && r.has_prompt())
        .filter_map(|f| real_by_prompt.get(f.prompt.as_str()).map(|r| (f, *r)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dists = pairs
        .par_iter()
        .map(|(fake, real)| {
            connection_distribution(
                &backend,
                &fake.id,
                &fake.prompt,
                &load_rgb(&real.image_path)?,
                &load_rgb(&fake.image_path)?,
                a.temperature,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ConnectionRow> = pairs
        .iter()
        .zip(&dists)
        .map(|((_, real), d)| ConnectionRow {
            prompt_id: &d.prompt_id,
            real_id: &real.id,
            p_real: d.p_real,
            p_fake: d.p_fake,
        })
        .collect();
    write_tsv(&a.out, &rows)?;
    if let Some(plot) = &a.plot {
        let p_fake: Vec<f64> = dists.iter().map(|d| d.p_fake).collect();
        save_bar_chart(&histogram(&p_fake, 10, 0.0, 1.0)?, ChartSize::default(), plot)?;
    }
    persist(Some(&backend))?;
    Ok(Some(a.out.clone()))
}

#[derive(Serialize)]
struct BinRow {
    bin: usize,
    min_score: f64,
    max_score: f64,
    n: usize,
    accuracy: Option<f64>,
}

fn descriptiveness_cmd(a: &DescriptivenessArgs) -> Result<Option<PathBuf>> {
    let backend = open_backend(&a.backend)?;
    let (model, encoder) = load_detector(&a.detector)?;
    let scorer = scorer(&model, &encoder);
    let manifest = load_manifest(&a.manifest)?;
    let records: Vec<&PromptImagePair> = manifest
        .records
        .iter()
        .filter(|r| r.has_prompt() && a.origin.as_ref().is_none_or(|o| &r.origin == o))
        .collect();
    let samples = records
        .par_iter()
        .map(|r| {
            let image = load_rgb(&r.image_path)?;
            let score = descriptiveness(&backend, &r.prompt, &image)?;
            let verdict = scorer.verdict(r)?;
            Ok(ScoredSample {
                id: r.id.clone(),
                score,
                correct: (verdict.label == VerdictLabel::Real) == r.origin.is_real(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let binning = if a.equal_width {
        Binning::EqualWidth
    } else {
        Binning::Quantile
    };
    let bins = bin_by_descriptiveness(&samples, a.bins, binning)?;
    let rows: Vec<BinRow> = bins
        .iter()
        .map(|b| BinRow {
            bin: b.index,
            min_score: b.min_score,
            max_score: b.max_score,
            n: b.members.len(),
            accuracy: b.accuracy,
        })
        .collect();
    write_tsv(&a.out, &rows)?;
    write_tsv(&beside(&a.out, "samples.tsv"), &samples)?;
    if let Some(plot) = &a.plot {
        let acc: Vec<f64> = bins.iter().map(|b| b.accuracy.unwrap_or(0.0)).collect();
        save_bar_chart(&acc, ChartSize::default(), plot)?;
    }
    persist(Some(&backend))?;
    persist(encoder.as_ref())?;
    Ok(Some(a.out.clone()))
}

fn topics_cmd(a: &TopicsArgs) -> Result<Option<PathBuf>> {
    let (model, encoder) = load_detector(&a.detector)?;
    let manifest = load_manifest(&a.manifest)?;
    let mut ranked = topic_authenticity(&manifest.records, &scorer(&model, &encoder))?;
    ranked.truncate(a.top_k);
    write_tsv(&a.out, &ranked)?;
    if let Some(plot) = &a.plot {
        let values: Vec<f64> = ranked.iter().map(|t| t.real_proportion).collect();
        save_bar_chart(&values, ChartSize::default(), plot)?;
    }
    persist(encoder.as_ref())?;
    Ok(Some(a.out.clone()))
}

#[derive(Serialize)]
struct ClusterRow {
    cluster_id: i64,
    size: usize,
    real_proportion: f64,
    representatives: String,
    members: String,
}

fn cluster_cmd(a: &ClusterArgs) -> Result<Option<PathBuf>> {
    let backend = open_backend(&a.backend)?;
    let (model, encoder) = load_detector(&a.detector)?;
    let scorer = scorer(&model, &encoder);
    let manifest = load_manifest(&a.manifest)?;
    let fakes = prompted_fakes(&manifest);
    let points = fakes
        .par_iter()
        .map(|r| {
            Ok(ClusterPoint {
                id: r.id.clone(),
                embedding: encode_text(&backend, &r.prompt)?.into_values(),
                classified_real: scorer.verdict(r)?.label == VerdictLabel::Real,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports = cluster_prompts(&points, a.eps, a.min_pts)?;
    let rows: Vec<ClusterRow> = reports
        .iter()
        .map(|c| ClusterRow {
            cluster_id: c.cluster_id,
            size: c.members.len(),
            real_proportion: c.real_proportion,
            representatives: c.representatives.join(" | "),
            members: c.members.join(","),
        })
        .collect();
    write_tsv(&a.out, &rows)?;
    persist(Some(&backend))?;
    persist(encoder.as_ref())?;
    Ok(Some(a.out.clone()))
}

fn structure_cmd(a: &StructureArgs) -> Result<Option<PathBuf>> {
    let (model, encoder) = load_detector(&a.detector)?;
    let manifest = load_manifest(&a.manifest)?;
    let bins = StructureBins {
        length_edges: a.length_edges.clone(),
        noun_ratio_edges: a.noun_edges.clone(),
    };
    let report = structure_report(
        &prompted_fakes(&manifest),
        &scorer(&model, &encoder),
        &LexiconTagger,
        &bins,
    )?;
    write_tsv(&a.out, &report.rows)?;
    write_tsv(&beside(&a.out, "length-bins.tsv"), &report.length_bins)?;
    write_tsv(&beside(&a.out, "noun-bins.tsv"), &report.noun_ratio_bins)?;
    if let Some(plot) = &a.plot {
        let values: Vec<f64> = report
            .length_bins
            .iter()
            .map(|b| b.mean_authenticity.unwrap_or(0.0))
            .collect();
        save_bar_chart(&values, ChartSize::default(), plot)?;
    }
    persist(encoder.as_ref())?;
    Ok(Some(a.out.clone()))
}
