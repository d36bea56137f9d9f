//! Five-way entailment labels and the three-way collapse used by the head.

use core::fmt;
use core::str::FromStr;

/// The five categories a claim/document pair can fall into.
///
/// Declaration order is the fixed tie-break order used everywhere a
/// deterministic choice between labels is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Label5 {
    #[cfg_attr(feature = "serde", serde(rename = "Support_Text"))]
    SupportText,
    #[cfg_attr(feature = "serde", serde(rename = "Support_Multimodal"))]
    SupportMultimodal,
    #[cfg_attr(feature = "serde", serde(rename = "Insufficient_Text"))]
    InsufficientText,
    #[cfg_attr(feature = "serde", serde(rename = "Insufficient_Multimodal"))]
    InsufficientMultimodal,
    #[cfg_attr(feature = "serde", serde(rename = "Refute"))]
    Refute,
}

impl Label5 {
    pub const COUNT: usize = 5;

    pub const ALL: [Label5; 5] = [
        Label5::SupportText,
        Label5::SupportMultimodal,
        Label5::InsufficientText,
        Label5::InsufficientMultimodal,
        Label5::Refute,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Canonical spelling, e.g. `Support_Text`.
    pub fn as_str(self) -> &'static str {
        match self {
            Label5::SupportText => "Support_Text",
            Label5::SupportMultimodal => "Support_Multimodal",
            Label5::InsufficientText => "Insufficient_Text",
            Label5::InsufficientMultimodal => "Insufficient_Multimodal",
            Label5::Refute => "Refute",
        }
    }

    /// Drops the text/multimodal axis.
    pub fn collapse(self) -> Label3 {
        match self {
            Label5::SupportText | Label5::SupportMultimodal => Label3::Support,
            Label5::InsufficientText | Label5::InsufficientMultimodal => Label3::Insufficient,
            Label5::Refute => Label3::Refute,
        }
    }
}

/// See [`Label5::collapse`].
pub fn collapse_label(label: Label5) -> Label3 {
    label.collapse()
}

impl fmt::Display for Label5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}")]
pub struct ParseLabelError(pub alloc::string::String);

impl FromStr for Label5 {
    type Err = ParseLabelError;

    /// Case-insensitive, ignores surrounding whitespace.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Label5::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| ParseLabelError(t.into()))
    }
}

/// Entailment status with the modality axis removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Label3 {
    Support,
    Insufficient,
    Refute,
}

impl Label3 {
    pub const COUNT: usize = 3;

    pub const ALL: [Label3; 3] = [Label3::Support, Label3::Insufficient, Label3::Refute];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label3::Support => "support",
            Label3::Insufficient => "insufficient",
            Label3::Refute => "refute",
        }
    }
}

impl fmt::Display for Label3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
