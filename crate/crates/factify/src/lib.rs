//! Multi-modal claim/document fact verification.
//!
//! The pipeline compares a claim with its reference document along four
//! coherence signals (ROUGE overlap, text length, text embedding similarity,
//! image embedding similarity) plus the output of a small entailment MLP, and
//! fuses them with a random forest into one of five labels.
//!
//! This crate carries the IO side: encoder backends and their on-disk cache,
//! dataset ingestion and image fetching, model bundles, the experiment
//! harness and the `factify` CLI. The numeric kernels live in
//! [`factify_core`].

pub mod bundle;
pub mod cache;
pub mod config;
pub mod dataio;
pub mod encoder;
mod error;
pub mod grid;
pub mod pipeline;
pub mod report;
pub mod text;

pub use error::{Error, Result};
pub use factify_core as core;
