//! The fused per-pair feature vector and its named schema.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::lexical::LexicalFeatures;
use crate::mlp::HeadVariant;
use crate::{Error, Result};

/// A group of features that is switched on or off as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureFamily {
    Rouge,
    Length,
    TextCosine,
    ImageCosine,
    Head,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 5] = [
        FeatureFamily::Rouge,
        FeatureFamily::Length,
        FeatureFamily::TextCosine,
        FeatureFamily::ImageCosine,
        FeatureFamily::Head,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFamily::Rouge => "rouge",
            FeatureFamily::Length => "length",
            FeatureFamily::TextCosine => "text_cosine",
            FeatureFamily::ImageCosine => "image_cosine",
            FeatureFamily::Head => "head",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown feature family {s:?}")))
    }
}

/// A set of enabled feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureFlags(u8);

impl FeatureFlags {
    pub const fn empty() -> Self {
        FeatureFlags(0)
    }

    pub fn all() -> Self {
        FeatureFamily::ALL.into_iter().collect()
    }

    pub fn contains(self, f: FeatureFamily) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn with(mut self, f: FeatureFamily) -> Self {
        self.0 |= f.bit();
        self
    }

    pub fn without(mut self, f: FeatureFamily) -> Self {
        self.0 &= !f.bit();
        self
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureFamily> {
        FeatureFamily::ALL
            .into_iter()
            .filter(move |f| self.contains(*f))
    }
}

impl FromIterator<FeatureFamily> for FeatureFlags {
    fn from_iter<I: IntoIterator<Item = FeatureFamily>>(iter: I) -> Self {
        iter.into_iter()
            .fold(FeatureFlags::empty(), FeatureFlags::with)
    }
}

/// Names of the head sub-vector entries for a fused variant.
pub fn head_feature_names(variant: HeadVariant) -> Vec<String> {
    const TEXT: [&str; 3] = ["head_p_support", "head_p_insufficient", "head_p_refute"];
    const IMAGE: [&str; 3] = [
        "image_head_p_support",
        "image_head_p_insufficient",
        "image_head_p_refute",
    ];
    let names: &[&str] = match variant {
        HeadVariant::TextPair3 => &TEXT,
        HeadVariant::ImagePair3 => &IMAGE,
        HeadVariant::TextAndImagePair3 => {
            &[TEXT[0], TEXT[1], TEXT[2], IMAGE[0], IMAGE[1], IMAGE[2]]
        }
        HeadVariant::AllConcat5 => &[],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Ordered feature names shared by every row of an experiment.
#[derive(Debug, Clone)]
pub struct FeatureSchema(Arc<[String]>);

impl PartialEq for FeatureSchema {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for FeatureSchema {}

impl FeatureSchema {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptyInput("feature schema"));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::SchemaMismatch(alloc::format!(
                    "duplicate feature {n:?}"
                )));
            }
        }
        Ok(FeatureSchema(names.into()))
    }

    /// The fixed-order schema for the enabled families. The head family only
    /// contributes when a fused head variant is configured.
    pub fn build(flags: FeatureFlags, head: Option<HeadVariant>) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut push = |xs: &[&str]| names.extend(xs.iter().map(|s| s.to_string()));
        if flags.contains(FeatureFamily::Rouge) {
            push(&["rouge1_f", "rouge2_f", "rougeL_f"]);
        }
        if flags.contains(FeatureFamily::Length) {
            push(&["claim_len", "doc_len", "len_ratio"]);
        }
        if flags.contains(FeatureFamily::TextCosine) {
            push(&["text_cosine"]);
        }
        if flags.contains(FeatureFamily::ImageCosine) {
            push(&["image_cosine"]);
        }
        if flags.contains(FeatureFamily::Head) {
            if let Some(v) = head {
                names.extend(head_feature_names(v));
            }
        }
        Self::new(names)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    /// Number of `*head_p_*` entries.
    pub fn head_width(&self) -> usize {
        self.0.iter().filter(|n| n.contains("head_p_")).count()
    }

    pub fn check(&self, other: &FeatureSchema) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(alloc::format!(
                "expected [{}], found [{}]",
                self.0.join(","),
                other.0.join(",")
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    schema: FeatureSchema,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: FeatureSchema, values: Vec<f64>) -> Result<Self> {
        if schema.len() != values.len() {
            return Err(Error::SchemaMismatch(alloc::format!(
                "{} values for {} features",
                values.len(),
                schema.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature values must be finite".into()));
        }
        Ok(FeatureVector { schema, values })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.values[i])
    }
}

/// Fills `schema` by name from the per-pair signals. `head` must supply
/// exactly as many values as the schema has head entries.
pub fn assemble_features(
    schema: &FeatureSchema,
    lex: &LexicalFeatures,
    text_sim: f64,
    image_sim: f64,
    head: &[f64],
) -> Result<FeatureVector> {
    if head.len() != schema.head_width() {
        return Err(Error::SchemaMismatch(alloc::format!(
            "head sub-vector has {} values, schema expects {}",
            head.len(),
            schema.head_width()
        )));
    }
    let mut head_values = head.iter();
    let mut values = Vec::with_capacity(schema.len());
    for name in schema.names() {
        let v = match name.as_str() {
            "rouge1_f" => lex.rouge1_f,
            "rouge2_f" => lex.rouge2_f,
            "rougeL_f" => lex.rouge_l_f,
            "claim_len" => lex.claim_len as f64,
            "doc_len" => lex.doc_len as f64,
            "len_ratio" => lex.len_ratio,
            "text_cosine" => text_sim,
            "image_cosine" => image_sim,
            n if n.contains("head_p_") => *head_values.next().expect("head width checked"),
            other => {
                return Err(Error::SchemaMismatch(alloc::format!(
                    "unknown feature {other:?}"
                )));
            }
        };
        values.push(v);
    }
    FeatureVector::new(schema.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> LexicalFeatures {
        LexicalFeatures::from_texts("the cat ran", "the cat sat")
    }

    #[test]
    fn default_schema_has_eleven_features_in_order() {
        let s = FeatureSchema::build(FeatureFlags::all(), Some(HeadVariant::TextPair3)).unwrap();
        assert_eq!(
            s.names(),
            [
                "rouge1_f",
                "rouge2_f",
                "rougeL_f",
                "claim_len",
                "doc_len",
                "len_ratio",
                "text_cosine",
                "image_cosine",
                "head_p_support",
                "head_p_insufficient",
                "head_p_refute"
            ]
        );
        let v = assemble_features(&s, &lex(), 0.8, 0.1, &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(v.values().len(), 11);
        assert_eq!(v.get("doc_len"), Some(3.0));
        assert_eq!(v.get("head_p_refute"), Some(0.5));
    }

    #[test]
    fn dropping_rouge_and_length_leaves_five() {
        let flags = FeatureFlags::all()
            .without(FeatureFamily::Rouge)
            .without(FeatureFamily::Length);
        let s = FeatureSchema::build(flags, Some(HeadVariant::TextPair3)).unwrap();
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn variant_widths() {
        let all = FeatureFlags::all();
        let w = |v| FeatureSchema::build(all, Some(v)).unwrap().len();
        assert_eq!(w(HeadVariant::TextAndImagePair3), 14);
        assert_eq!(w(HeadVariant::ImagePair3), 11);
        assert_eq!(w(HeadVariant::AllConcat5), 8);
        assert_eq!(FeatureSchema::build(all, None).unwrap().len(), 8);
    }

    #[test]
    fn head_width_mismatch_is_schema_error() {
        let s = FeatureSchema::build(FeatureFlags::all(), Some(HeadVariant::TextPair3)).unwrap();
        assert!(matches!(
            assemble_features(&s, &lex(), 0.0, 0.0, &[0.5, 0.5]),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn assembly_is_deterministic() {
        let s = FeatureSchema::build(FeatureFlags::all(), Some(HeadVariant::TextPair3)).unwrap();
        let a = assemble_features(&s, &lex(), 0.4, 0.6, &[0.1, 0.1, 0.8]).unwrap();
        let b = assemble_features(&s, &lex(), 0.4, 0.6, &[0.1, 0.1, 0.8]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_flags_are_rejected() {
        assert!(FeatureSchema::build(FeatureFlags::empty(), None).is_err());
        // head flag without a fused variant contributes nothing
        let only_head = FeatureFlags::empty().with(FeatureFamily::Head);
        assert!(FeatureSchema::build(only_head, Some(HeadVariant::AllConcat5)).is_err());
    }

    #[test]
    fn schema_equality_is_by_content() {
        let a = FeatureSchema::build(FeatureFlags::all(), None).unwrap();
        let b = FeatureSchema::new(a.names().to_vec()).unwrap();
        assert!(a.check(&b).is_ok());
        let c = FeatureSchema::new(alloc::vec!["text_cosine".into()]).unwrap();
        assert!(a.check(&c).is_err());
    }
}
