use alloc::string::String;

use crate::label::Label5;
use crate::{Error, Result};

/// One dataset row: a claim and its reference document, each with text and
/// an image reference.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClaimDocPair {
    pub id: String,
    pub claim_text: String,
    pub doc_text: String,
    pub claim_image_ref: String,
    pub doc_image_ref: String,
    pub gold_label: Option<Label5>,
}

impl ClaimDocPair {
    /// Both texts must be non-empty after trimming.
    pub fn validate(&self) -> Result<()> {
        if self.claim_text.trim().is_empty() {
            return Err(Error::EmptyInput("claim text"));
        }
        if self.doc_text.trim().is_empty() {
            return Err(Error::EmptyInput("document text"));
        }
        Ok(())
    }
}
