//! Per-feature z-normalization fitted on the training split.

use alloc::string::String;
use alloc::vec::Vec;

use crate::features::{FeatureSchema, FeatureVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerState {
    schema: FeatureSchema,
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub fitted_on: String,
}

impl NormalizerState {
    /// Mean and population std of each column. Needs at least two rows, all
    /// sharing one schema.
    pub fn fit(rows: &[FeatureVector], fitted_on: impl Into<String>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::EmptyInput("normalizer needs at least two rows"));
        }
        let schema = rows[0].schema().clone();
        for r in rows {
            schema.check(r.schema())?;
        }
        let n = rows.len() as f64;
        let d = schema.len();
        let mut mean = alloc::vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.values()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.values()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| libm::sqrt(s / n)).collect();
        Ok(NormalizerState {
            schema,
            mean,
            std,
            fitted_on: fitted_on.into(),
        })
    }

    /// Rebuilds a persisted state.
    pub fn from_parts(
        schema: FeatureSchema,
        mean: Vec<f64>,
        std: Vec<f64>,
        fitted_on: String,
    ) -> Result<Self> {
        if mean.len() != schema.len() || std.len() != schema.len() {
            return Err(Error::SchemaMismatch(
                "normalizer statistics do not match schema".into(),
            ));
        }
        if std.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::InvalidConfig(
                "normalizer std must be non-negative".into(),
            ));
        }
        Ok(NormalizerState {
            schema,
            mean,
            std,
            fitted_on,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// `(x - mean) / std`, with zero-variance features mapped to 0.
    pub fn apply(&self, row: &FeatureVector) -> Result<FeatureVector> {
        self.schema.check(row.schema())?;
        let values = row
            .values()
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect();
        FeatureVector::new(self.schema.clone(), values)
    }
}
