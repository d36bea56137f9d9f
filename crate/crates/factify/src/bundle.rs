//! Persisted model bundle: everything needed to score new pairs.
//!
//! ```text
//! <dir>/manifest.json    settings, backend specs, train-split fingerprint
//! <dir>/schema.json      ordered feature names        (fused mode)
//! <dir>/normalizer.json  per-feature mean and std     (fused mode)
//! <dir>/forest.bin       serialized forest            (fused mode)
//! <dir>/head-<i>.bin     entailment head weights
//! ```
//!
//! Head files start with `key=value` header lines ending in a blank line,
//! followed by the W1, b1, W2, b2 blocks, each a little-endian `u32` row
//! count, `u32` column count and row-major `f32` values.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use factify_core::features::{FeatureFlags, FeatureSchema};
use factify_core::forest::{ForestConfig, RandomForest};
use factify_core::mlp::{
    EntailmentHead, HeadFeatureForm, HeadInput, HeadVariant, MlpWeights, TrainLog,
};
use factify_core::normalize::NormalizerState;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MlpSection};
use crate::dataio::ColumnMap;
use crate::encoder::EncoderSpec;
use crate::error::IoContext;
use crate::{Error, Result};

pub const BUNDLE_FORMAT: &str = "factify-bundle/1";
const HEAD_MAGIC: &str = "factify-head 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BundleMode {
    /// Features fused by a forest.
    Fused,
    /// The five-way head is the classifier.
    StandaloneHead,
}

/// Embedding roles a bundle needs at inference time.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendRoles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<EncoderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<EncoderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_text: Option<EncoderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_image: Option<EncoderSpec>,
}

impl BackendRoles {
    pub fn specs(&self) -> impl Iterator<Item = &EncoderSpec> {
        [&self.text, &self.image, &self.head_text, &self.head_image]
            .into_iter()
            .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainFingerprint {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadLog {
    pub input: String,
    pub train_examples: usize,
    pub holdout_examples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub missing_categories: Vec<usize>,
}

impl HeadLog {
    pub fn new(
        input: HeadInput,
        train_examples: usize,
        holdout_examples: usize,
        log: &TrainLog,
    ) -> Self {
        HeadLog {
            input: input.as_str().to_owned(),
            train_examples,
            holdout_examples,
            initial_loss: log.initial_loss,
            final_loss: log.epoch_losses.last().copied().unwrap_or(log.initial_loss),
            epochs_run: log.epoch_losses.len(),
            best_epoch: log.best_epoch,
            missing_categories: log.missing_categories.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format: String,
    pub mode: BundleMode,
    pub seed: u64,
    pub feature_flags: Vec<String>,
    pub head_variant: Option<HeadVariant>,
    pub head_features: HeadFeatureForm,
    pub backends: BackendRoles,
    pub column_map: ColumnMap,
    pub forest: Option<ForestConfig>,
    pub mlp: Option<MlpSection>,
    pub train: TrainFingerprint,
    pub heads: Vec<HeadLog>,
}

impl BundleManifest {
    pub fn feature_flags(&self) -> Result<FeatureFlags> {
        self.feature_flags
            .iter()
            .map(|n| n.parse())
            .collect::<Result<FeatureFlags, _>>()
            .map_err(Error::from)
    }

    /// Settings echoed from the experiment config; heads and fingerprint
    /// are filled in by the caller.
    pub fn from_config(
        cfg: &ExperimentConfig,
        backends: BackendRoles,
        train: TrainFingerprint,
    ) -> Self {
        let head = cfg.active_head();
        BundleManifest {
            format: BUNDLE_FORMAT.to_owned(),
            mode: if cfg.is_standalone() {
                BundleMode::StandaloneHead
            } else {
                BundleMode::Fused
            },
            seed: cfg.seed,
            feature_flags: cfg
                .feature_flags
                .iter()
                .map(|f| f.as_str().to_owned())
                .collect(),
            head_variant: head,
            head_features: cfg.head_features,
            backends,
            column_map: cfg.dataset.column_map.clone(),
            forest: (!cfg.is_standalone()).then(|| cfg.forest_config()),
            mlp: head.map(|_| {
                let mut m = cfg.mlp;
                m.seed = Some(m.seed.unwrap_or(cfg.seed));
                m
            }),
            train,
            heads: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormalizerFile {
    fitted_on: String,
    features: Vec<NormalizerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormalizerEntry {
    name: String,
    mean: f64,
    std: f64,
}

/// The fused-mode scorer: schema, normalizer and forest.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedModel {
    pub schema: FeatureSchema,
    pub normalizer: NormalizerState,
    pub forest: RandomForest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub heads: Vec<EntailmentHead>,
    pub fused: Option<FusedModel>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).at(dir)?;
    tmp.write_all(bytes).at(path)?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("bundle parts serialize");
    s.push(b'\n');
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

impl Bundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;
        write_file(&dir.join("manifest.json"), &to_json(&self.manifest))?;
        for (i, head) in self.heads.iter().enumerate() {
            write_file(&dir.join(format!("head-{i}.bin")), &encode_head(head))?;
        }
        if let Some(f) = &self.fused {
            write_file(&dir.join("schema.json"), &to_json(&f.schema.names()))?;
            let norm = NormalizerFile {
                fitted_on: f.normalizer.fitted_on.clone(),
                features: f
                    .schema
                    .names()
                    .iter()
                    .zip(f.normalizer.mean.iter().zip(&f.normalizer.std))
                    .map(|(name, (&mean, &std))| NormalizerEntry {
                        name: name.clone(),
                        mean,
                        std,
                    })
                    .collect(),
            };
            write_file(&dir.join("normalizer.json"), &to_json(&norm))?;
            write_file(&dir.join("forest.bin"), &f.forest.to_bytes())?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::Data(format!(
                "unsupported bundle format {:?}",
                manifest.format
            )));
        }
        let inputs = manifest.head_variant.map_or(&[][..], |v| v.inputs());
        let mut heads = Vec::with_capacity(inputs.len());
        for (i, &input) in inputs.iter().enumerate() {
            let path = dir.join(format!("head-{i}.bin"));
            let bytes = std::fs::read(&path).at(&path)?;
            let head =
                decode_head(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if head.input != input {
                return Err(Error::Data(format!(
                    "{}: head input does not match manifest",
                    path.display()
                )));
            }
            heads.push(head);
        }
        let fused = match manifest.mode {
            BundleMode::StandaloneHead => None,
            BundleMode::Fused => {
                let names: Vec<String> = read_json(&dir.join("schema.json"))?;
                let schema = FeatureSchema::new(names)?;
                let norm: NormalizerFile = read_json(&dir.join("normalizer.json"))?;
                if norm
                    .features
                    .iter()
                    .map(|e| &e.name)
                    .ne(schema.names().iter())
                {
                    return Err(Error::Data(
                        "normalizer features do not match schema".into(),
                    ));
                }
                let normalizer = NormalizerState::from_parts(
                    schema.clone(),
                    norm.features.iter().map(|e| e.mean).collect(),
                    norm.features.iter().map(|e| e.std).collect(),
                    norm.fitted_on,
                )?;
                let path = dir.join("forest.bin");
                let forest = RandomForest::from_bytes(&std::fs::read(&path).at(&path)?)?;
                if forest.n_features() != schema.len() {
                    return Err(Error::Data("forest width does not match schema".into()));
                }
                Some(FusedModel {
                    schema,
                    normalizer,
                    forest,
                })
            }
        };
        Ok(Bundle {
            manifest,
            heads,
            fused,
        })
    }

    /// Every file of the bundle, sorted by name, with its bytes.
    pub fn files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
        let mut out = BTreeMap::new();
        for entry in std::fs::read_dir(dir).at(dir)? {
            let entry = entry.at(dir)?;
            if entry.file_type().at(dir)?.is_file() {
                let path = entry.path();
                out.insert(
                    entry.file_name().to_string_lossy().into_owned(),
                    std::fs::read(&path).at(&path)?,
                );
            }
        }
        Ok(out)
    }
}

pub fn encode_head(head: &EntailmentHead) -> Vec<u8> {
    let w = &head.weights;
    let (ni, nh, no) = (w.input_dim(), w.hidden_dim(), w.output_dim());
    let mut out = format!(
        "{HEAD_MAGIC}\ninput={}\ninput_dim={ni}\nhidden_dim={nh}\noutput_dim={no}\n\n",
        head.input.as_str()
    )
    .into_bytes();
    for (rows, cols, values) in [
        (nh, ni, w.w1()),
        (nh, 1, w.b1()),
        (no, nh, w.w2()),
        (no, 1, w.b2()),
    ] {
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_head(bytes: &[u8]) -> std::result::Result<EntailmentHead, String> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or("missing header terminator")?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| "header is not UTF-8")?;
    let mut lines = header.lines();
    if lines.next() != Some(HEAD_MAGIC) {
        return Err("not a head file".into());
    }
    let mut fields = BTreeMap::new();
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("bad header line {line:?}"))?;
        fields.insert(k, v);
    }
    let field = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| format!("header lacks {k}"))
    };
    let dim = |k: &str| -> std::result::Result<usize, String> {
        field(k)?.parse().map_err(|_| format!("bad {k}"))
    };
    let input: HeadInput = field("input")?
        .parse()
        .map_err(|e: factify_core::Error| e.to_string())?;
    let (ni, nh, no) = (dim("input_dim")?, dim("hidden_dim")?, dim("output_dim")?);

    let mut body = &bytes[split + 2..];
    let take_u32 = |body: &mut &[u8]| -> std::result::Result<usize, String> {
        let (head, rest) = body.split_at_checked(4).ok_or("truncated block header")?;
        *body = rest;
        Ok(u32::from_le_bytes(head.try_into().unwrap()) as usize)
    };
    let mut blocks = Vec::with_capacity(4);
    for (rows, cols) in [(nh, ni), (nh, 1), (no, nh), (no, 1)] {
        let (r, c) = (take_u32(&mut body)?, take_u32(&mut body)?);
        if (r, c) != (rows, cols) {
            return Err(format!("block shape {r}x{c}, expected {rows}x{cols}"));
        }
        let n = r * c * 4;
        let (data, rest) = body.split_at_checked(n).ok_or("truncated block")?;
        body = rest;
        blocks.push(
            data.chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect::<Vec<f64>>(),
        );
    }
    if !body.is_empty() {
        return Err("trailing bytes".into());
    }
    let weights =
        MlpWeights::from_blocks(ni, nh, no, &blocks[0], &blocks[1], &blocks[2], &blocks[3])
            .map_err(|e| e.to_string())?;
    Ok(EntailmentHead { input, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use factify_core::mlp::MlpConfig;

    fn head() -> EntailmentHead {
        let mut cfg = MlpConfig::new(6, 3);
        cfg.hidden_dim = 4;
        let mut weights = MlpWeights::init(&cfg);
        weights.quantize_f32();
        EntailmentHead {
            input: HeadInput::TextPair,
            weights,
        }
    }

    #[test]
    fn head_round_trips_exactly_after_quantization() {
        let h = head();
        let bytes = encode_head(&h);
        assert_eq!(decode_head(&bytes).unwrap(), h);
        assert!(bytes.starts_with(b"factify-head 1\ninput=text-pair\n"));
    }

    #[test]
    fn head_decode_rejects_damage() {
        let bytes = encode_head(&head());
        assert!(decode_head(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_head(&extra).is_err());
        let bad = String::from_utf8_lossy(&bytes).replacen("hidden_dim=4", "hidden_dim=5", 1);
        assert!(decode_head(bad.as_bytes()).is_err());
        assert!(decode_head(b"garbage").is_err());
    }
}
