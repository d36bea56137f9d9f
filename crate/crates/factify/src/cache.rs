//! Content-addressed on-disk embedding cache.
//!
//! Layout: `<root>/<backend_id>/<first two hex chars>/<key>.vec`, where `key`
//! is the SHA-256 of the backend id, its cache version and the input's
//! content key. Entries are `EMB1`, little-endian `u32` dim, `dim` × `f32`,
//! then a `u32` CRC32 over the dim and value bytes. Writes go to a temp file
//! in the same directory and are renamed into place.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use factify_core::similarity::Embedding;
use sha2::{Digest, Sha256};

use crate::encoder::{EncoderError, EncoderSpec};
use crate::error::IoContext;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corrupt cache entry: {0}")]
pub struct CacheCorrupt(pub String);

pub fn encode_entry(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_entry(bytes: &[u8]) -> Result<Vec<f32>, CacheCorrupt> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(CacheCorrupt("bad header".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = dim
        .checked_mul(4)
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| CacheCorrupt("dim overflow".into()))?;
    if bytes.len() != expected {
        return Err(CacheCorrupt(format!(
            "length {} for dim {dim}",
            bytes.len()
        )));
    }
    let payload = &bytes[4..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(CacheCorrupt("checksum mismatch".into()));
    }
    Ok(payload[4..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub repairs: u64,
}

#[derive(Debug)]
pub struct EmbeddingCache {
    root: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
    repairs: AtomicU64,
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        EmbeddingCache {
            root: root.into(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            repairs: AtomicU64::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            repairs: self.repairs.load(Ordering::Relaxed),
        }
    }

    pub fn key(spec: &EncoderSpec, content_key: &[u8]) -> String {
        let mut h = Sha256::new();
        for part in [
            spec.backend_id.as_bytes(),
            spec.cache_version().as_bytes(),
            content_key,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        hex::encode(h.finalize())
    }

    pub fn entry_path(&self, backend_id: &str, key: &str) -> PathBuf {
        self.root
            .join(backend_id)
            .join(&key[..2])
            .join(format!("{key}.vec"))
    }

    /// `Ok(None)` on a miss; corrupt entries surface as `Err`.
    pub fn load(
        &self,
        spec: &EncoderSpec,
        key: &str,
    ) -> Result<Option<Result<Vec<f32>, CacheCorrupt>>> {
        let path = self.entry_path(&spec.backend_id, key);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(decode_entry(&bytes).and_then(|v| {
                if v.len() == spec.dim {
                    Ok(v)
                } else {
                    Err(CacheCorrupt(format!(
                        "dim {} for backend dim {}",
                        v.len(),
                        spec.dim
                    )))
                }
            }))),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn store(&self, spec: &EncoderSpec, key: &str, values: &[f32]) -> Result<()> {
        let path = self.entry_path(&spec.backend_id, key);
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir).at(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).at(dir)?;
        tmp.write_all(&encode_entry(values)).at(&path)?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    /// Returns the cached vector for `(spec, content_key)`, running
    /// `produce` and persisting its output on a miss. A corrupt entry counts
    /// as a miss and is overwritten.
    pub fn cached_embed<F>(
        &self,
        spec: &EncoderSpec,
        content_key: &[u8],
        produce: F,
    ) -> Result<Embedding>
    where
        F: FnOnce() -> Result<Embedding, EncoderError>,
    {
        let key = Self::key(spec, content_key);
        match self.load(spec, &key)? {
            Some(Ok(values)) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(Embedding::new(spec.backend_id.clone(), values)?);
            }
            Some(Err(corrupt)) => {
                log::warn!(
                    "{}: {corrupt}; recomputing",
                    self.entry_path(&spec.backend_id, &key).display()
                );
                self.repairs.fetch_add(1, Ordering::Relaxed);
            }
            None => {}
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let embedding = produce()?;
        self.store(spec, &key, embedding.values())?;
        Ok(embedding)
    }
}
