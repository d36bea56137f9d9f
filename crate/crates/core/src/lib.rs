//! Pure kernels for structure-coherence fact verification.
//!
//! Everything in this crate is `no_std` and only needs an allocator: label
//! types, tokenization and ROUGE overlap, cosine similarity, the entailment
//! MLP head, the feature schema and normalizer, the random-forest fuser, and
//! evaluation metrics. IO, encoders, caching and the CLI live in the `factify`
//! crate.
//!
//! ```
//! use factify_core::lexical::{rouge_n, tokenize};
//!
//! let claim = tokenize("The cat ran.");
//! let doc = tokenize("the cat sat");
//! let r1 = rouge_n(&claim, &doc, 1);
//! assert!((r1.f1 - 2.0 / 3.0).abs() < 1e-12);
//! ```

#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;

mod error;

pub mod features;
pub mod forest;
pub mod label;
pub mod lexical;
pub mod metrics;
pub mod mlp;
pub mod normalize;
pub mod pair;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
pub use label::{Label3, Label5};
pub use pair::ClaimDocPair;
