//! Embeddings and cosine similarity.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Norms below this are treated as a zero vector.
pub const ZERO_NORM: f64 = 1e-12;

/// A fixed-length encoder output tagged with the backend that produced it.
///
/// Values are stored as `f32`, the on-disk cache precision, so a freshly
/// encoded vector and its cached copy are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
    backend_id: String,
}

impl Embedding {
    /// Rejects empty or non-finite vectors.
    pub fn new(backend_id: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "embedding has non-finite entries".into(),
            ));
        }
        Ok(Embedding {
            values,
            backend_id: backend_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        cosine(&self.values, &other.values)
    }
}

/// `dot(a, b) / (|a| |b|)`, accumulated in `f64` and clamped to `[-1, 1]`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (libm::sqrt(na), libm::sqrt(nb));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine with the zero-vector policy applied: degenerate inputs score 0.
pub fn cosine_or_zero(a: &[f32], b: &[f32]) -> Result<f64> {
    match cosine(a, b) {
        Err(Error::ZeroVector) => Ok(0.0),
        other => other,
    }
}
