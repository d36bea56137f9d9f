//! Experiment configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use factify_core::features::{FeatureFamily, FeatureFlags};
use factify_core::forest::ForestConfig;
use factify_core::mlp::{HeadFeatureForm, HeadVariant, MlpConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::synth::SynthSpec;
use crate::dataio::ColumnMap;
use crate::encoder::{BackendEntry, Modality, Registry};
use crate::{Error, Result};

pub const CACHE_ENV: &str = "FACTIFY_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "defaults::text_backend")]
    pub text_backend: String,
    #[serde(default = "defaults::image_backend")]
    pub image_backend: String,
    /// Text backend feeding the entailment head.
    #[serde(default = "defaults::head_text_backend")]
    pub head_text_backend: String,
    /// Image backend feeding heads that read images.
    #[serde(default = "defaults::head_image_backend")]
    pub head_image_backend: String,
    #[serde(default = "defaults::head_variant", with = "head_choice")]
    pub head_variant: Option<HeadVariant>,
    #[serde(default = "FeatureFlags::all", with = "flag_list")]
    pub feature_flags: FeatureFlags,
    #[serde(default)]
    pub head_features: HeadFeatureForm,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub mlp: MlpSection,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Embedding and image cache; `FACTIFY_CACHE` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_root: Option<PathBuf>,
    /// Feature-extraction worker threads; 0 picks one per core (at most 8).
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub fetch: FetchSection,
    /// Added or overriding encoder backends, keyed by backend id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub backends: BTreeMap<String, BackendEntry>,
}

mod defaults {
    use super::*;

    pub fn text_backend() -> String {
        "sentence-text".into()
    }
    pub fn image_backend() -> String {
        "resnet-image".into()
    }
    pub fn head_text_backend() -> String {
        "clip-text".into()
    }
    pub fn head_image_backend() -> String {
        "clip-image".into()
    }
    pub fn head_variant() -> Option<HeadVariant> {
        Some(HeadVariant::TextPair3)
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn output_dir() -> PathBuf {
        "runs".into()
    }
}

/// Either explicit split files or a synthetic dataset spec.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default)]
    pub column_map: ColumnMap,
}

/// Forest settings; `seed` defaults to the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for ForestSection {
    fn default() -> Self {
        let d = ForestConfig::default();
        ForestSection {
            n_trees: d.n_trees,
            max_depth: d.max_depth,
            min_samples_leaf: d.min_samples_leaf,
            seed: None,
        }
    }
}

/// Head settings; dimensions come from the backends and the variant, `seed`
/// defaults to the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub init_scale: f64,
    /// Share of the training split held out for early stopping.
    pub holdout_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for MlpSection {
    fn default() -> Self {
        let d = MlpConfig::new(1, 3);
        MlpSection {
            hidden_dim: d.hidden_dim,
            learning_rate: d.learning_rate,
            max_epochs: d.max_epochs,
            batch_size: d.batch_size,
            patience: d.patience,
            init_scale: d.init_scale,
            holdout_fraction: 0.1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSection {
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for FetchSection {
    fn default() -> Self {
        FetchSection {
            retries: 3,
            backoff_ms: 200,
            timeout_s: 30,
        }
    }
}

mod head_choice {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<HeadVariant>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.map_or("none", HeadVariant::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<HeadVariant>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "none" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

mod flag_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &FeatureFlags, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(FeatureFamily::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FeatureFlags, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names
            .iter()
            .map(|n| n.parse::<FeatureFamily>())
            .collect::<Result<FeatureFlags, _>>()
            .map_err(serde::de::Error::custom)
    }
}

impl ExperimentConfig {
    /// Config over the given split files with every default.
    pub fn with_splits(train: PathBuf, val: PathBuf, test: Option<PathBuf>) -> Self {
        let dataset = DatasetConfig {
            train: Some(train),
            val: Some(val),
            test,
            ..DatasetConfig::default()
        };
        let value = toml::Value::try_from(DatasetWrapper { dataset }).expect("dataset serializes");
        value.try_into().expect("defaults are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.dataset.train,
            &mut self.dataset.val,
            &mut self.dataset.test,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        if let Some(c) = &mut self.cache_root {
            fix(c);
        }
        for entry in self.backends.values_mut() {
            if let Some(a) = &mut entry.asset {
                fix(a);
            }
        }
    }

    pub fn registry(&self) -> Result<Registry> {
        Ok(Registry::with_entries(&self.backends)?)
    }

    /// Checks the invariants that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.feature_flags.is_empty() {
            return Err(Error::Config("feature_flags must not be empty".into()));
        }
        let d = &self.dataset;
        match (&d.synth, &d.train, &d.val) {
            (Some(s), None, None) if d.test.is_none() => {
                if s.per_category == 0 {
                    return Err(Error::Config(
                        "dataset.synth.per_category must be at least 1".into(),
                    ));
                }
            }
            (None, Some(_), Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "dataset needs either train and val paths or a synth section, not both".into(),
                ))
            }
        }
        let standalone = self.head_variant == Some(HeadVariant::AllConcat5);
        if self.feature_flags.contains(FeatureFamily::Head) && self.head_variant.is_none() {
            return Err(Error::Config(
                "feature family head needs a head_variant".into(),
            ));
        }
        let m = &self.mlp;
        if !(0.0..1.0).contains(&m.holdout_fraction) {
            return Err(Error::Config(
                "mlp.holdout_fraction must be in [0, 1)".into(),
            ));
        }
        self.forest_config().validate()?;
        let registry = self.registry()?;
        let want = |id: &str, modality: Modality| -> Result<()> {
            let spec = registry.get(id)?;
            if spec.modality != modality {
                return Err(Error::Config(format!(
                    "backend {id:?} is not a {modality} backend"
                )));
            }
            Ok(())
        };
        if self.feature_flags.contains(FeatureFamily::TextCosine) {
            want(&self.text_backend, Modality::Text)?;
        }
        if self.feature_flags.contains(FeatureFamily::ImageCosine) {
            want(&self.image_backend, Modality::Image)?;
        }
        if let Some(v) = self.active_head() {
            if v.uses_text() {
                want(&self.head_text_backend, Modality::Text)?;
            }
            if v.uses_images() {
                want(&self.head_image_backend, Modality::Image)?;
            }
            self.mlp_template(v, 1, 1).validate()?;
        }
        if standalone && self.feature_flags.contains(FeatureFamily::Head) {
            log::info!(
                "all-concat5 runs as a standalone classifier; the head feature family is unused"
            );
        }
        Ok(())
    }

    /// The head that has to be trained, if any: a fused variant with the
    /// head family enabled, or the standalone five-way variant.
    pub fn active_head(&self) -> Option<HeadVariant> {
        match self.head_variant {
            Some(HeadVariant::AllConcat5) => Some(HeadVariant::AllConcat5),
            Some(v) if self.feature_flags.contains(FeatureFamily::Head) => Some(v),
            _ => None,
        }
    }

    pub fn is_standalone(&self) -> bool {
        self.head_variant == Some(HeadVariant::AllConcat5)
    }

    /// Head variant whose outputs enter the fused feature vector.
    pub fn fused_head(&self) -> Option<HeadVariant> {
        self.active_head().filter(|v| v.is_fused())
    }

    pub fn forest_config(&self) -> ForestConfig {
        let f = &self.forest;
        ForestConfig {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_samples_leaf: f.min_samples_leaf,
            seed: f.seed.unwrap_or(self.seed),
        }
    }

    pub fn mlp_template(
        &self,
        variant: HeadVariant,
        input_dim: usize,
        head_index: usize,
    ) -> MlpConfig {
        let m = &self.mlp;
        MlpConfig {
            input_dim,
            hidden_dim: m.hidden_dim,
            output_dim: variant.output_dim(),
            learning_rate: m.learning_rate,
            max_epochs: m.max_epochs,
            batch_size: m.batch_size,
            seed: m.seed.unwrap_or(self.seed).wrapping_add(head_index as u64),
            patience: m.patience,
            init_scale: m.init_scale,
        }
    }

    /// Cache location: `FACTIFY_CACHE`, then `cache_root`, then `cache/`
    /// next to the output directory.
    pub fn resolved_cache_root(&self) -> PathBuf {
        if let Some(env) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(env);
        }
        self.cache_root
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            return self.workers;
        }
        std::thread::available_parallelism().map_or(1, |n| n.get().min(8))
    }

    /// Hash of every setting that can change results; names the run
    /// directory. Worker count and cache location are excluded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.cache_root = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir
            .join(format!("run-{}", &self.content_hash()[..12]))
    }
}

#[derive(Serialize)]
struct DatasetWrapper {
    dataset: DatasetConfig,
}

/// Config written next to a synthetic dataset: mock backends stand in for
/// every pretrained role so the full pipeline runs offline.
pub fn synthetic_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_splits(
        "train.csv".into(),
        "val.csv".into(),
        Some("test.csv".into()),
    );
    cfg.seed = seed;
    cfg.output_dir = "runs".into();
    cfg.cache_root = Some("cache".into());
    cfg.backends = mock_backends();
    cfg
}

pub fn mock_backends() -> BTreeMap<String, BackendEntry> {
    use crate::encoder::BackendKind;
    let entry = |kind, modality, recipe: Option<&str>| BackendEntry {
        kind,
        modality,
        dim: 64,
        version: "1".into(),
        recipe: recipe.map(str::to_owned),
        asset: None,
    };
    let mut m = BTreeMap::new();
    for id in ["sentence-text", "simcse-text", "roberta-text", "clip-text"] {
        m.insert(
            id.to_owned(),
            entry(BackendKind::Planted, Modality::Text, None),
        );
    }
    for id in ["resnet-image", "clip-image"] {
        m.insert(
            id.to_owned(),
            entry(BackendKind::Projection, Modality::Image, Some("mock-32")),
        );
    }
    m
}
