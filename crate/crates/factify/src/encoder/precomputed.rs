use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::sync::Arc;

use serde::Deserialize;

use super::{EncodeInput, Encoder, EncoderError, EncoderSpec, Modality};
use crate::text::normalize_text;

/// Vectors exported by an external model runtime, one JSON object per line:
/// `{"key": "...", "vector": [..]}`. Text keys are matched after the same
/// normalization the dataset loader applies; image keys are the image
/// reference exactly as it appears in the dataset.
#[derive(Debug)]
pub struct PrecomputedTable {
    vectors: HashMap<String, Vec<f32>>,
}

#[derive(Deserialize)]
struct Line {
    key: String,
    vector: Vec<f32>,
}

impl PrecomputedTable {
    pub fn load(spec: &EncoderSpec) -> Result<Self, EncoderError> {
        let unavailable = |reason: String| EncoderError::BackendUnavailable {
            backend: spec.backend_id.clone(),
            reason,
        };
        let path = spec
            .asset
            .as_ref()
            .ok_or_else(|| unavailable("no model asset configured".into()))?;
        let file = File::open(path).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| unavailable(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if parsed.vector.len() != spec.dim {
                return Err(unavailable(format!(
                    "{}:{}: vector has {} values, expected {}",
                    path.display(),
                    i + 1,
                    parsed.vector.len(),
                    spec.dim
                )));
            }
            let key = match spec.modality {
                Modality::Text => normalize_text(&parsed.key),
                Modality::Image => parsed.key,
            };
            vectors.insert(key, parsed.vector);
        }
        Ok(PrecomputedTable { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug)]
pub struct PrecomputedEncoder {
    spec: EncoderSpec,
    table: Arc<PrecomputedTable>,
}

impl PrecomputedEncoder {
    pub fn new(spec: EncoderSpec, table: Arc<PrecomputedTable>) -> Self {
        PrecomputedEncoder { spec, table }
    }
}

impl Encoder for PrecomputedEncoder {
    fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    fn encode_raw(&mut self, input: EncodeInput<'_>) -> Result<Vec<f32>, EncoderError> {
        let key = match input {
            EncodeInput::Text(t) => normalize_text(t),
            EncodeInput::Image { reference, .. } => reference.to_owned(),
        };
        self.table
            .vectors
            .get(&key)
            .cloned()
            .ok_or_else(|| EncoderError::EncodingFailure {
                backend: self.spec.backend_id.clone(),
                reason: format!("no exported vector for {key:?}"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{encode_text, BackendKind, EncoderFactory};
    use super::*;
    use std::io::Write;

    #[test]
    fn looks_up_normalized_text() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"key": "hello   world", "vector": [1.0, 0.0, 0.5]}}"#
        )
        .unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"key": "other", "vector": [0.0, 1.0, 0.0]}}"#).unwrap();
        let spec = EncoderSpec {
            backend_id: "sentence-text".into(),
            kind: BackendKind::Precomputed,
            modality: Modality::Text,
            dim: 3,
            version: "1".into(),
            recipe: None,
            asset: Some(f.path().to_owned()),
        };
        let factory = EncoderFactory::new(spec);
        let mut enc = factory.instantiate().unwrap();
        let e = encode_text(enc.as_mut(), " hello world ").unwrap();
        assert_eq!(e.values(), [1.0, 0.0, 0.5]);
        assert!(matches!(
            encode_text(enc.as_mut(), "missing"),
            Err(EncoderError::EncodingFailure { .. })
        ));
    }

    #[test]
    fn wrong_dimension_makes_backend_unavailable() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"key": "a", "vector": [1.0]}}"#).unwrap();
        let spec = EncoderSpec {
            backend_id: "x".into(),
            kind: BackendKind::Precomputed,
            modality: Modality::Text,
            dim: 3,
            version: "1".into(),
            recipe: None,
            asset: Some(f.path().to_owned()),
        };
        assert!(matches!(
            PrecomputedTable::load(&spec),
            Err(EncoderError::BackendUnavailable { .. })
        ));
    }
}
