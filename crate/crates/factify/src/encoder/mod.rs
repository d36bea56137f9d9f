//! Text and image encoder backends behind a string-keyed registry.
//!
//! Real pretrained models are external assets: a `precomputed` backend reads
//! vectors exported by whatever runtime hosts the model. The mock kinds are
//! deterministic stand-ins used for tests and synthetic experiments.
//!
//! Encoders are `Send` but not shared: the pipeline creates one instance per
//! worker thread through an [`EncoderFactory`].

pub mod mock;
mod precomputed;
pub mod preprocess;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use factify_core::similarity::Embedding;
use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use mock::{parse_marker, planted_marker, HashEncoder, PlantedEncoder, ProjectionEncoder};
pub use precomputed::{PrecomputedEncoder, PrecomputedTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Seeded from a hash of the input; no notion of similarity.
    Hash,
    /// Reads a marker in the text and emits vectors with a prescribed cosine.
    Planted,
    /// Random projection of preprocessed pixels; similar images stay similar.
    Projection,
    /// Looks vectors up in an exported table.
    Precomputed,
}

/// Everything needed to instantiate a backend and to key its cache entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub backend_id: String,
    pub kind: BackendKind,
    pub modality: Modality,
    pub dim: usize,
    /// Bumped whenever the backend's output for a given input changes.
    #[serde(default = "default_version")]
    pub version: String,
    /// Image preprocessing recipe id; only meaningful for image backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<PathBuf>,
}

fn default_version() -> String {
    "1".into()
}

impl EncoderSpec {
    /// Identifies the exact output function, including the preprocessing
    /// recipe, so cache keys change whenever outputs could.
    pub fn cache_version(&self) -> String {
        let kind = serde_json::to_value(self.kind).expect("enum serializes");
        let kind = kind.as_str().unwrap_or_default().to_owned();
        match &self.recipe {
            Some(r) => format!("{kind}/{}/{r}", self.version),
            None => format!("{kind}/{}", self.version),
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let ok_id = !self.backend_id.is_empty()
            && self
                .backend_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !ok_id || self.backend_id.starts_with('.') {
            return Err(EncoderError::InvalidSpec(format!(
                "backend id {:?} must be [A-Za-z0-9._-]+",
                self.backend_id
            )));
        }
        if self.dim == 0 {
            return Err(EncoderError::InvalidSpec(format!(
                "{}: dim must be positive",
                self.backend_id
            )));
        }
        let kind_fits = match self.kind {
            BackendKind::Hash | BackendKind::Precomputed => true,
            BackendKind::Planted => self.modality == Modality::Text,
            BackendKind::Projection => self.modality == Modality::Image,
        };
        if !kind_fits {
            return Err(EncoderError::InvalidSpec(format!(
                "{}: backend kind does not support {} inputs",
                self.backend_id, self.modality
            )));
        }
        if let Some(r) = &self.recipe {
            preprocess::Recipe::from_id(r).ok_or_else(|| {
                EncoderError::InvalidSpec(format!(
                    "{}: unknown preprocessing recipe {r:?}",
                    self.backend_id
                ))
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncoderError {
    #[error("unknown encoder backend {0:?}")]
    UnknownBackend(String),

    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),

    #[error("backend {backend} unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },

    #[error("backend {backend} failed to encode: {reason}")]
    EncodingFailure { backend: String, reason: String },

    #[error("backend {backend} expects {expected} input")]
    WrongModality { backend: String, expected: Modality },
}

/// Input to an encoder. Image inputs carry their dataset reference so table
/// lookups can key on it.
#[derive(Debug, Clone, Copy)]
pub enum EncodeInput<'a> {
    Text(&'a str),
    Image {
        reference: &'a str,
        raster: &'a RgbImage,
    },
}

impl EncodeInput<'_> {
    pub fn modality(&self) -> Modality {
        match self {
            EncodeInput::Text(_) => Modality::Text,
            EncodeInput::Image { .. } => Modality::Image,
        }
    }
}

pub trait Encoder: Send {
    fn spec(&self) -> &EncoderSpec;

    /// Produces a raw vector; callers go through [`encode`] which enforces
    /// modality and dimension.
    fn encode_raw(&mut self, input: EncodeInput<'_>) -> Result<Vec<f32>, EncoderError>;
}

/// Encodes and checks the backend contract.
pub fn encode(
    encoder: &mut dyn Encoder,
    input: EncodeInput<'_>,
) -> Result<Embedding, EncoderError> {
    let spec = encoder.spec().clone();
    if input.modality() != spec.modality {
        return Err(EncoderError::WrongModality {
            backend: spec.backend_id,
            expected: spec.modality,
        });
    }
    let values = encoder.encode_raw(input)?;
    let fail = |reason: String| EncoderError::EncodingFailure {
        backend: spec.backend_id.clone(),
        reason,
    };
    if values.len() != spec.dim {
        return Err(fail(format!(
            "produced {} values, declared dim {}",
            values.len(),
            spec.dim
        )));
    }
    Embedding::new(spec.backend_id.clone(), values).map_err(|e| fail(e.to_string()))
}

pub fn encode_text(encoder: &mut dyn Encoder, text: &str) -> Result<Embedding, EncoderError> {
    encode(encoder, EncodeInput::Text(text))
}

pub fn encode_image(
    encoder: &mut dyn Encoder,
    reference: &str,
    raster: &RgbImage,
) -> Result<Embedding, EncoderError> {
    encode(encoder, EncodeInput::Image { reference, raster })
}

/// Backend entry as written in a config file; the id comes from the table key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEntry {
    pub kind: BackendKind,
    pub modality: Modality,
    pub dim: usize,
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default)]
    pub recipe: Option<String>,
    #[serde(default)]
    pub asset: Option<PathBuf>,
}

impl BackendEntry {
    pub fn into_spec(self, backend_id: &str) -> EncoderSpec {
        EncoderSpec {
            backend_id: backend_id.to_owned(),
            kind: self.kind,
            modality: self.modality,
            dim: self.dim,
            version: self.version,
            recipe: self.recipe,
            asset: self.asset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    specs: BTreeMap<String, EncoderSpec>,
}

impl Registry {
    /// Mock backends plus the pretrained roles, which need an exported
    /// `asset` table before they can be instantiated.
    pub fn builtin() -> Self {
        let mut specs = BTreeMap::new();
        let mut add = |id: &str, kind, modality, dim, recipe: Option<&str>| {
            specs.insert(
                id.to_owned(),
                EncoderSpec {
                    backend_id: id.to_owned(),
                    kind,
                    modality,
                    dim,
                    version: default_version(),
                    recipe: recipe.map(str::to_owned),
                    asset: None,
                },
            );
        };
        use BackendKind::*;
        use Modality::*;
        add("mock-text", Hash, Text, 512, None);
        add("mock-planted", Planted, Text, 512, None);
        add("mock-image", Projection, Image, 512, Some("mock-32"));
        add("sentence-text", Precomputed, Text, 768, None);
        add("simcse-text", Precomputed, Text, 768, None);
        add("roberta-text", Precomputed, Text, 768, None);
        add("clip-text", Precomputed, Text, 512, None);
        add(
            "resnet-image",
            Precomputed,
            Image,
            2048,
            Some("imagenet-224"),
        );
        add("clip-image", Precomputed, Image, 512, Some("clip-224"));
        Registry { specs }
    }

    /// Built-ins overridden or extended by config entries.
    pub fn with_entries(entries: &BTreeMap<String, BackendEntry>) -> Result<Self, EncoderError> {
        let mut reg = Self::builtin();
        for (id, entry) in entries {
            let spec = entry.clone().into_spec(id);
            spec.validate()?;
            reg.specs.insert(id.clone(), spec);
        }
        Ok(reg)
    }

    pub fn get(&self, backend_id: &str) -> Result<&EncoderSpec, EncoderError> {
        self.specs
            .get(backend_id)
            .ok_or_else(|| EncoderError::UnknownBackend(backend_id.to_owned()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}

/// Creates encoder instances for one backend and counts every encode call
/// made through them.
pub struct EncoderFactory {
    spec: EncoderSpec,
    calls: Arc<AtomicU64>,
    table: OnceLock<Result<Arc<PrecomputedTable>, EncoderError>>,
}

impl fmt::Debug for EncoderFactory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncoderFactory")
            .field("spec", &self.spec)
            .field("calls", &self.calls())
            .finish()
    }
}

impl EncoderFactory {
    pub fn new(spec: EncoderSpec) -> Self {
        EncoderFactory {
            spec,
            calls: Arc::new(AtomicU64::new(0)),
            table: OnceLock::new(),
        }
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn instantiate(&self) -> Result<Box<dyn Encoder>, EncoderError> {
        self.spec.validate()?;
        let inner: Box<dyn Encoder> = match self.spec.kind {
            BackendKind::Hash => Box::new(HashEncoder::new(self.spec.clone())),
            BackendKind::Planted => Box::new(PlantedEncoder::new(self.spec.clone())),
            BackendKind::Projection => Box::new(ProjectionEncoder::new(self.spec.clone())?),
            BackendKind::Precomputed => {
                let table = self
                    .table
                    .get_or_init(|| PrecomputedTable::load(&self.spec).map(Arc::new))
                    .clone()?;
                Box::new(PrecomputedEncoder::new(self.spec.clone(), table))
            }
        };
        Ok(Box::new(Counted {
            inner,
            calls: Arc::clone(&self.calls),
        }))
    }
}

struct Counted {
    inner: Box<dyn Encoder>,
    calls: Arc<AtomicU64>,
}

impl Encoder for Counted {
    fn spec(&self) -> &EncoderSpec {
        self.inner.spec()
    }

    fn encode_raw(&mut self, input: EncodeInput<'_>) -> Result<Vec<f32>, EncoderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.encode_raw(input)
    }
}
