//! End-to-end experiment: load, embed, train, fuse, evaluate, persist.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use factify_core::features::{
    assemble_features, FeatureFamily, FeatureFlags, FeatureSchema, FeatureVector,
};
use factify_core::forest::RandomForest;
use factify_core::lexical::LexicalFeatures;
use factify_core::metrics::{weighted_f1, EvalReport};
use factify_core::mlp::{
    head_features, train, EntailmentHead, Example, HeadFeatureForm, HeadVariant, PairEmbeddings,
};
use factify_core::normalize::NormalizerState;
use factify_core::rng::seeded;
use factify_core::similarity::cosine_or_zero;
use factify_core::{ClaimDocPair, Label5};
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::bundle::{
    BackendRoles, Bundle, BundleManifest, BundleMode, FusedModel, HeadLog, TrainFingerprint,
};
use crate::cache::EmbeddingCache;
use crate::config::ExperimentConfig;
use crate::dataio::synth::{split_paths, write_synth, SynthSpec};
use crate::dataio::{
    decode_rgb, load_split, ColumnMap, DatasetManifest, HttpTransport, ImageFetcher, SplitName,
};
use crate::encoder::{
    encode_image, encode_text, Encoder, EncoderError, EncoderFactory, EncoderSpec, Modality,
};
use crate::error::IoContext;
use crate::report::{
    eval_to_json, predictions_csv, ImageFailure, RunReport, RunStatus, SplitSummary,
};
use crate::{Error, Result};

/// Claim-side and document-side vectors of one row for one backend; `None`
/// where the input could not be fetched or decoded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairVectors {
    pub claim: Option<Vec<f32>>,
    pub doc: Option<Vec<f32>>,
}

/// Per backend id, one entry per row.
pub type SplitEmbeddings = BTreeMap<String, Vec<PairVectors>>;

/// Shared encoding machinery for one process: cache, image fetcher and
/// per-backend factories with call counters.
#[derive(Debug)]
pub struct EmbeddingStage {
    cache: EmbeddingCache,
    fetcher: ImageFetcher,
    factories: BTreeMap<String, EncoderFactory>,
    workers: usize,
    failures: Mutex<Vec<ImageFailure>>,
}

impl EmbeddingStage {
    pub fn new(cache_root: &Path, fetch: &crate::config::FetchSection, workers: usize) -> Self {
        let transport = Arc::new(HttpTransport::new(Duration::from_secs(fetch.timeout_s)));
        EmbeddingStage {
            cache: EmbeddingCache::new(cache_root.join("embeddings")),
            fetcher: ImageFetcher::new(
                cache_root,
                transport,
                fetch.retries,
                Duration::from_millis(fetch.backoff_ms),
            ),
            factories: BTreeMap::new(),
            workers: workers.max(1),
            failures: Mutex::new(Vec::new()),
        }
    }

    pub fn register(&mut self, spec: &EncoderSpec) {
        self.factories
            .entry(spec.backend_id.clone())
            .or_insert_with(|| EncoderFactory::new(spec.clone()));
    }

    pub fn encoder_calls(&self) -> BTreeMap<String, u64> {
        self.factories
            .iter()
            .map(|(id, f)| (id.clone(), f.calls()))
            .collect()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn take_failures(&self) -> Vec<ImageFailure> {
        std::mem::take(&mut *self.failures.lock().unwrap_or_else(|p| p.into_inner()))
    }

    /// Embeds every row of `split` with every registered backend.
    pub fn embed(&self, split: &DatasetManifest) -> Result<SplitEmbeddings> {
        let mut out = SplitEmbeddings::new();
        for (id, factory) in &self.factories {
            out.insert(id.clone(), self.embed_backend(split, factory)?);
        }
        Ok(out)
    }

    fn embed_backend(
        &self,
        split: &DatasetManifest,
        factory: &EncoderFactory,
    ) -> Result<Vec<PairVectors>> {
        let rows = &split.rows;
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let chunk = rows.len().div_ceil(self.workers);
        let results: Vec<Result<Vec<PairVectors>>> = std::thread::scope(|s| {
            let handles: Vec<_> = rows
                .chunks(chunk)
                .map(|part| s.spawn(move || self.embed_rows(split, part, factory)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Runtime("embedding worker panicked".into())))
                })
                .collect()
        });
        let mut out = Vec::with_capacity(rows.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn embed_rows(
        &self,
        split: &DatasetManifest,
        rows: &[ClaimDocPair],
        factory: &EncoderFactory,
    ) -> Result<Vec<PairVectors>> {
        // One encoder per worker, created on the first cache miss.
        let mut encoder: Option<Box<dyn Encoder>> = None;
        let spec = factory.spec();
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let mut one =
                |text: &str, image_ref: &str, side: &'static str| -> Result<Option<Vec<f32>>> {
                    match spec.modality {
                        Modality::Text => {
                            let e = self.cache.cached_embed(spec, text.as_bytes(), || {
                                let enc = instantiate(&mut encoder, factory)?;
                                encode_text(enc, text)
                            })?;
                            Ok(Some(e.into_values()))
                        }
                        Modality::Image => {
                            self.embed_image(split, row, image_ref, side, factory, &mut encoder)
                        }
                    }
                };
            let claim = one(&row.claim_text, &row.claim_image_ref, "claim")?;
            let doc = one(&row.doc_text, &row.doc_image_ref, "document")?;
            out.push(PairVectors { claim, doc });
        }
        Ok(out)
    }

    fn embed_image(
        &self,
        split: &DatasetManifest,
        row: &ClaimDocPair,
        reference: &str,
        side: &'static str,
        factory: &EncoderFactory,
        encoder: &mut Option<Box<dyn Encoder>>,
    ) -> Result<Option<Vec<f32>>> {
        let spec = factory.spec();
        let fail = |reason: String| {
            log::warn!("{} {} {side} image: {reason}", split.split, row.id);
            self.failures
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .push(ImageFailure {
                    split: split.split,
                    id: row.id.clone(),
                    side,
                    reason,
                });
            Ok(None)
        };
        let bytes = match self.fetcher.fetch(reference, split.base_dir()) {
            Ok(b) => b,
            Err(e) => return fail(e.to_string()),
        };
        let content_key = hex::encode(Sha256::digest(&bytes));
        let produced = self.cache.cached_embed(spec, content_key.as_bytes(), || {
            let raster =
                decode_rgb(reference, &bytes).map_err(|e| EncoderError::EncodingFailure {
                    backend: spec.backend_id.clone(),
                    reason: e.to_string(),
                })?;
            let enc = instantiate(encoder, factory)?;
            encode_image(enc, reference, &raster)
        });
        match produced {
            Ok(e) => Ok(Some(e.into_values())),
            Err(Error::Encoder(EncoderError::EncodingFailure { reason, .. })) => fail(reason),
            Err(e) => Err(e),
        }
    }
}

fn instantiate<'a>(
    slot: &'a mut Option<Box<dyn Encoder>>,
    factory: &EncoderFactory,
) -> Result<&'a mut dyn Encoder, EncoderError> {
    if slot.is_none() {
        *slot = Some(factory.instantiate()?);
    }
    Ok(slot.as_deref_mut().expect("just set"))
}

fn vectors<'a>(
    embeds: &'a SplitEmbeddings,
    spec: Option<&EncoderSpec>,
    i: usize,
) -> (Option<&'a [f32]>, Option<&'a [f32]>) {
    spec.and_then(|s| embeds.get(&s.backend_id))
        .and_then(|v| v.get(i))
        .map_or((None, None), |p| (p.claim.as_deref(), p.doc.as_deref()))
}

fn head_inputs<'a>(
    roles: &BackendRoles,
    embeds: &'a SplitEmbeddings,
    i: usize,
) -> PairEmbeddings<'a> {
    let (claim_text, doc_text) = vectors(embeds, roles.head_text.as_ref(), i);
    let (claim_image, doc_image) = vectors(embeds, roles.head_image.as_ref(), i);
    PairEmbeddings {
        claim_text,
        doc_text,
        claim_image,
        doc_image,
    }
}

fn pair_cosine(pair: (Option<&[f32]>, Option<&[f32]>)) -> Result<f64> {
    match pair {
        (Some(a), Some(b)) => Ok(cosine_or_zero(a, b)?),
        _ => Ok(0.0),
    }
}

/// Raw (unnormalized) fused feature vectors for one split.
fn raw_features(
    manifest: &BundleManifest,
    heads: &[EntailmentHead],
    schema: &FeatureSchema,
    split: &DatasetManifest,
    embeds: &SplitEmbeddings,
) -> Result<Vec<FeatureVector>> {
    let flags = manifest.feature_flags()?;
    let roles = &manifest.backends;
    let fused_head = manifest
        .head_variant
        .filter(|v| v.is_fused() && flags.contains(FeatureFamily::Head));
    split
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let lex = LexicalFeatures::from_texts(&row.claim_text, &row.doc_text);
            let text_sim = pair_cosine(vectors(embeds, roles.text.as_ref(), i))?;
            let image_sim = pair_cosine(vectors(embeds, roles.image.as_ref(), i))?;
            let head = match fused_head {
                None => Vec::new(),
                Some(v) => head_vector(
                    v,
                    heads,
                    &head_inputs(roles, embeds, i),
                    manifest.head_features,
                )?,
            };
            Ok(assemble_features(schema, &lex, text_sim, image_sim, &head)?)
        })
        .collect()
}

/// Head outputs, or a uniform distribution when an input embedding is
/// missing (failed image).
fn head_vector(
    variant: HeadVariant,
    heads: &[EntailmentHead],
    emb: &PairEmbeddings<'_>,
    form: HeadFeatureForm,
) -> Result<Vec<f64>> {
    match head_features(variant, heads, emb, form) {
        Ok(v) => Ok(v),
        Err(factify_core::Error::EmptyInput(_)) => {
            let k = variant.output_dim();
            Ok(vec![1.0 / k as f64; variant.feature_width()])
        }
        Err(e) => Err(e.into()),
    }
}

/// Predicted labels for a split under a bundle.
pub fn predict_split(
    bundle: &Bundle,
    split: &DatasetManifest,
    embeds: &SplitEmbeddings,
) -> Result<Vec<Label5>> {
    match &bundle.fused {
        Some(f) => {
            let rows = raw_features(&bundle.manifest, &bundle.heads, &f.schema, split, embeds)?;
            rows.iter()
                .map(|r| {
                    let x = f.normalizer.apply(r)?;
                    let vote = f.forest.predict(x.values())?;
                    Ok(Label5::from_index(vote.class).expect("forest trained on five classes"))
                })
                .collect()
        }
        None => {
            let head = bundle
                .heads
                .first()
                .ok_or_else(|| Error::Data("standalone bundle has no head".into()))?;
            (0..split.rows.len())
                .map(|i| {
                    let emb = head_inputs(&bundle.manifest.backends, embeds, i);
                    let class = match head.predict(&emb) {
                        Ok(p) => p.argmax(),
                        Err(factify_core::Error::EmptyInput(_)) => 0,
                        Err(e) => return Err(e.into()),
                    };
                    Ok(Label5::from_index(class).expect("five-way head"))
                })
                .collect()
        }
    }
}

fn gold_labels(split: &DatasetManifest) -> Option<Vec<Label5>> {
    split
        .rows
        .iter()
        .map(|r| r.gold_label)
        .collect::<Option<Vec<_>>>()
        .filter(|v| !v.is_empty())
}

pub fn evaluate(split: &DatasetManifest, predictions: &[Label5]) -> Result<Option<EvalReport>> {
    match gold_labels(split) {
        Some(gold) => Ok(Some(weighted_f1(&gold, predictions)?)),
        None => Ok(None),
    }
}

fn train_heads(
    cfg: &ExperimentConfig,
    variant: HeadVariant,
    roles: &BackendRoles,
    train_split: &DatasetManifest,
    embeds: &SplitEmbeddings,
) -> Result<(Vec<EntailmentHead>, Vec<HeadLog>)> {
    let text_dim = roles.head_text.as_ref().map_or(0, |s| s.dim);
    let image_dim = roles.head_image.as_ref().map_or(0, |s| s.dim);
    let mut heads = Vec::new();
    let mut logs = Vec::new();
    for (index, &input) in variant.inputs().iter().enumerate() {
        let mut examples = Vec::new();
        for (i, row) in train_split.rows.iter().enumerate() {
            let label = row.gold_label.expect("training rows are labeled");
            let target = if variant.output_dim() == 3 {
                label.collapse().index()
            } else {
                label.index()
            };
            if let Ok(x) = input.build(&head_inputs(roles, embeds, i)) {
                examples.push(Example::new(x, target));
            }
        }
        let mlp_cfg = cfg.mlp_template(
            variant,
            HeadVariant::input_dim(input, text_dim, image_dim),
            index,
        );
        // Early stopping watches a seeded slice of the training split.
        let n_holdout = if mlp_cfg.patience > 0 {
            (examples.len() as f64 * cfg.mlp.holdout_fraction).floor() as usize
        } else {
            0
        };
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut seeded(mlp_cfg.seed, 2));
        let mut is_holdout = vec![false; examples.len()];
        for &i in &order[..n_holdout] {
            is_holdout[i] = true;
        }
        let (mut fit, mut holdout) = (Vec::new(), Vec::new());
        for (ex, h) in examples.into_iter().zip(is_holdout) {
            if h {
                holdout.push(ex);
            } else {
                fit.push(ex);
            }
        }
        log::info!(
            "training {} head on {} examples ({} held out)",
            input.as_str(),
            fit.len(),
            holdout.len()
        );
        let (mut weights, log) = train(&mlp_cfg, &fit, &holdout)?;
        // Persisted weights are f32; predict with exactly what is saved.
        weights.quantize_f32();
        logs.push(HeadLog::new(input, fit.len(), holdout.len(), &log));
        heads.push(EntailmentHead { input, weights });
    }
    Ok((heads, logs))
}

fn backend_roles(cfg: &ExperimentConfig) -> Result<BackendRoles> {
    let registry = cfg.registry()?;
    let get = |id: &str| -> Result<Option<EncoderSpec>> { Ok(Some(registry.get(id)?.clone())) };
    let fused = !cfg.is_standalone();
    let head = cfg.active_head();
    Ok(BackendRoles {
        text: if fused && cfg.feature_flags.contains(FeatureFamily::TextCosine) {
            get(&cfg.text_backend)?
        } else {
            None
        },
        image: if fused && cfg.feature_flags.contains(FeatureFamily::ImageCosine) {
            get(&cfg.image_backend)?
        } else {
            None
        },
        head_text: if head.is_some_and(|v| v.uses_text()) {
            get(&cfg.head_text_backend)?
        } else {
            None
        },
        head_image: if head.is_some_and(|v| v.uses_images()) {
            get(&cfg.head_image_backend)?
        } else {
            None
        },
    })
}

/// Resolved split files: explicit paths, or a synthetic dataset generated
/// once under the cache root.
fn dataset_paths(
    cfg: &ExperimentConfig,
    cache_root: &Path,
) -> Result<(PathBuf, PathBuf, Option<PathBuf>)> {
    let d = &cfg.dataset;
    if let Some(spec) = &d.synth {
        let dir = materialize_synth(spec, cache_root)?;
        let [train, val, test] = split_paths(&dir);
        return Ok((train, val, Some(test)));
    }
    match (&d.train, &d.val) {
        (Some(t), Some(v)) => Ok((t.clone(), v.clone(), d.test.clone())),
        _ => Err(Error::Config("dataset needs train and val paths".into())),
    }
}

fn materialize_synth(spec: &SynthSpec, cache_root: &Path) -> Result<PathBuf> {
    let id = hex::encode(Sha256::digest(
        serde_json::to_vec(spec).expect("spec serializes"),
    ));
    let dir = cache_root.join("synth").join(&id[..16]);
    let done = dir.join(".complete");
    if !done.exists() {
        write_synth(spec, &dir)?;
        std::fs::write(&done, b"").at(&done)?;
    }
    Ok(dir)
}

fn load(path: &Path, split: SplitName, columns: &ColumnMap) -> Result<DatasetManifest> {
    let m = load_split(path, split, columns)?;
    log::info!("{split}: {} rows from {}", m.rows.len(), path.display());
    Ok(m)
}

fn summary(m: &DatasetManifest) -> SplitSummary {
    SplitSummary {
        split: m.split,
        rows: m.rows.len(),
        labeled: m.is_labeled(),
        dropped_empty: m.report.dropped_empty.clone(),
        malformed: m.report.malformed.clone(),
    }
}

fn fingerprint(path: &Path, rows: usize) -> Result<TrainFingerprint> {
    let bytes = std::fs::read(path).at(path)?;
    Ok(TrainFingerprint {
        file: path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        sha256: hex::encode(Sha256::digest(&bytes)),
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub report: RunReport,
}

/// Runs the full pipeline and persists the bundle, evaluation reports and
/// run report under [`ExperimentConfig::run_dir`]. On failure a run report
/// with status `failed` and a `FAILED` marker are written before the error
/// is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir).at(&run_dir)?;
    let _ = std::fs::remove_file(run_dir.join("FAILED"));
    let mut report = RunReport::new(cfg.content_hash());
    let started = Instant::now();
    let result = run_inner(cfg, &run_dir, &mut report);
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    match result {
        Ok((val, test)) => {
            report.write(&run_dir.join("run_report.json"))?;
            Ok(RunOutcome {
                run_dir,
                val,
                test,
                report,
            })
        }
        Err(e) => {
            report.status = RunStatus::Failed;
            report.error = Some(e.to_string());
            if let Err(w) = report.write(&run_dir.join("run_report.json")) {
                log::error!("could not write run report: {w}");
            }
            let _ = std::fs::write(run_dir.join("FAILED"), format!("{e}\n"));
            Err(e)
        }
    }
}

type Reports = (Option<EvalReport>, Option<EvalReport>);

fn run_inner(cfg: &ExperimentConfig, run_dir: &Path, report: &mut RunReport) -> Result<Reports> {
    let cache_root = cfg.resolved_cache_root();
    let roles = backend_roles(cfg)?;
    let (train_path, val_path, test_path) = dataset_paths(cfg, &cache_root)?;
    std::fs::write(run_dir.join("config.toml"), cfg.to_toml()).at(run_dir)?;

    let columns = &cfg.dataset.column_map;
    let train_split = load(&train_path, SplitName::Train, columns)?;
    let val_split = load(&val_path, SplitName::Val, columns)?;
    let test_split = test_path
        .map(|p| load(&p, SplitName::Test, columns))
        .transpose()?;
    let splits: Vec<&DatasetManifest> = [Some(&train_split), Some(&val_split), test_split.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    report.splits = splits.iter().map(|s| summary(s)).collect();
    if train_split.rows.is_empty() {
        return Err(Error::Data("training split has no usable rows".into()));
    }
    if let Some(r) = train_split.rows.iter().find(|r| r.gold_label.is_none()) {
        return Err(Error::Data(format!(
            "training row {:?} has no category",
            r.id
        )));
    }

    let mut stage = EmbeddingStage::new(&cache_root, &cfg.fetch, cfg.worker_count());
    for spec in roles.specs() {
        stage.register(spec);
    }
    let mut embeds = Vec::with_capacity(splits.len());
    for s in &splits {
        embeds.push(stage.embed(s)?);
    }
    report.image_failures = stage.take_failures();
    report.encoder_calls = stage.encoder_calls();
    report.cache = stage.cache().stats();

    let mut manifest = BundleManifest::from_config(
        cfg,
        roles.clone(),
        fingerprint(&train_path, train_split.rows.len())?,
    );
    let mut heads = Vec::new();
    if let Some(variant) = cfg.active_head() {
        let (h, logs) = train_heads(cfg, variant, &roles, &train_split, &embeds[0])?;
        heads = h;
        manifest.heads = logs.clone();
        report.heads = logs;
    }

    let fused = match manifest.mode {
        BundleMode::StandaloneHead => {
            report
                .notes
                .push("all-concat5: evaluated as a standalone five-way classifier".into());
            None
        }
        BundleMode::Fused => Some(fit_fusion(
            cfg,
            &manifest,
            &heads,
            &train_split,
            &embeds[0],
        )?),
    };
    let bundle = Bundle {
        manifest,
        heads,
        fused,
    };
    bundle.write(&run_dir.join("bundle"))?;

    let mut out: Reports = (None, None);
    for (s, e) in splits.iter().zip(&embeds).skip(1) {
        let predictions = predict_split(&bundle, s, e)?;
        let rows: Vec<_> = s
            .rows
            .iter()
            .zip(&predictions)
            .map(|(r, &p)| (r.id.clone(), p, r.gold_label))
            .collect();
        let name = s.split;
        let path = run_dir.join(format!("predictions-{name}.csv"));
        std::fs::write(&path, predictions_csv(&rows)).at(&path)?;
        match evaluate(s, &predictions)? {
            Some(r) => {
                let path = run_dir.join(format!("eval-{name}.json"));
                std::fs::write(&path, eval_to_json(name, &r)).at(&path)?;
                let path = run_dir.join(format!("confusion-{name}.csv"));
                std::fs::write(&path, r.confusion.to_csv()).at(&path)?;
                log::info!("{name} weighted F1 {:.4}", r.weighted_f1);
                report.weighted_f1.insert(name.to_string(), r.weighted_f1);
                if name == SplitName::Val {
                    out.0 = Some(r);
                } else {
                    out.1 = Some(r);
                }
            }
            None => {
                for stale in [format!("eval-{name}.json"), format!("confusion-{name}.csv")] {
                    let _ = std::fs::remove_file(run_dir.join(stale));
                }
                report
                    .notes
                    .push(format!("{name} split is unlabeled; predictions only"));
            }
        }
    }
    Ok(out)
}

fn fit_fusion(
    cfg: &ExperimentConfig,
    manifest: &BundleManifest,
    heads: &[EntailmentHead],
    train_split: &DatasetManifest,
    embeds: &SplitEmbeddings,
) -> Result<FusedModel> {
    let flags: FeatureFlags = cfg.feature_flags;
    let schema = FeatureSchema::build(flags, cfg.fused_head())?;
    let raw = raw_features(manifest, heads, &schema, train_split, embeds)?;
    let normalizer = NormalizerState::fit(&raw, "train")?;
    let x: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| normalizer.apply(r).map(|v| v.values().to_vec()))
        .collect::<std::result::Result<_, _>>()?;
    let y: Vec<usize> = train_split
        .rows
        .iter()
        .map(|r| r.gold_label.expect("training rows are labeled").index())
        .collect();
    log::info!(
        "fitting forest on {} rows x {} features",
        x.len(),
        schema.len()
    );
    let forest = RandomForest::fit(&cfg.forest_config(), &x, &y, Label5::COUNT)?;
    Ok(FusedModel {
        schema,
        normalizer,
        forest,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<(String, Label5, Option<Label5>)>,
    pub report: Option<EvalReport>,
    pub image_failures: Vec<ImageFailure>,
    pub encoder_calls: BTreeMap<String, u64>,
}

/// Scores a split file with a persisted bundle.
pub fn evaluate_bundle(
    bundle_dir: &Path,
    split_path: &Path,
    cache_root: &Path,
    workers: usize,
) -> Result<Evaluation> {
    let bundle = Bundle::read(bundle_dir)?;
    let split = load(split_path, SplitName::Test, &bundle.manifest.column_map)?;
    let mut stage =
        EmbeddingStage::new(cache_root, &crate::config::FetchSection::default(), workers);
    for spec in bundle.manifest.backends.specs() {
        stage.register(spec);
    }
    let embeds = stage.embed(&split)?;
    let predictions = predict_split(&bundle, &split, &embeds)?;
    let report = evaluate(&split, &predictions)?;
    Ok(Evaluation {
        predictions: split
            .rows
            .iter()
            .zip(&predictions)
            .map(|(r, &p)| (r.id.clone(), p, r.gold_label))
            .collect(),
        report,
        image_failures: stage.take_failures(),
        encoder_calls: stage.encoder_calls(),
    })
}
