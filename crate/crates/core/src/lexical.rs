//! Tokenization, ROUGE-1/2/L overlap and text-length features.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::pair::ClaimDocPair;

/// Lowercased word tokens. No token is empty or contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Builds a sequence from pre-split words, re-tokenizing each so the
    /// invariants hold.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        for w in words {
            out.extend(tokenize(w.as_ref()).0);
        }
        TokenSeq(out)
    }
}

/// Lowercases and splits on every maximal run of non-alphanumeric chars.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSeq(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let recall = ratio(overlap, reference_total);
        let precision = ratio(overlap, candidate_total);
        RougeScore {
            recall,
            precision,
            f1: harmonic_mean(precision, recall),
        }
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N with clipped n-gram counts.
///
/// # Panics
/// If `n == 0`.
pub fn rouge_n(candidate: &TokenSeq, reference: &TokenSeq, n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let cand = ngram_counts(candidate.as_slice(), n);
    let refs = ngram_counts(reference.as_slice(), n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| refs.get(g).map_or(0, |&r| c.min(r)))
        .sum();
    let total = |len: usize| (len + 1).saturating_sub(n);
    RougeScore::from_counts(overlap, total(candidate.len()), total(reference.len()))
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based ROUGE-L with β = 1.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> RougeScore {
    let l = lcs_len(candidate.as_slice(), reference.as_slice());
    RougeScore::from_counts(l, candidate.len(), reference.len())
}

/// The literal-overlap and length coherence signals for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexicalFeatures {
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    pub rouge_l_f: f64,
    pub claim_len: usize,
    pub doc_len: usize,
    /// `max(claim_len, 1) / max(doc_len, 1)`
    pub len_ratio: f64,
}

impl LexicalFeatures {
    /// Claim tokens are the candidate, document tokens the reference.
    pub fn from_texts(claim: &str, doc: &str) -> Self {
        let c = tokenize(claim);
        let d = tokenize(doc);
        LexicalFeatures {
            rouge1_f: rouge_n(&c, &d, 1).f1,
            rouge2_f: rouge_n(&c, &d, 2).f1,
            rouge_l_f: rouge_l(&c, &d).f1,
            claim_len: c.len(),
            doc_len: d.len(),
            len_ratio: c.len().max(1) as f64 / d.len().max(1) as f64,
        }
    }
}

pub fn lexical_features(pair: &ClaimDocPair) -> LexicalFeatures {
    LexicalFeatures::from_texts(&pair.claim_text, &pair.doc_text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSeq {
        TokenSeq::from_words(words)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat sat.").into_inner(), ["the", "cat", "sat"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,.;!! ").is_empty());
        assert_eq!(
            tokenize("COVID-19 spreads").into_inner(),
            ["covid", "19", "spreads"]
        );
        assert_eq!(tokenize("Ünïcode ÉTÉ").into_inner(), ["ünïcode", "été"]);
    }

    #[test]
    fn rouge_n_worked_examples() {
        let c = seq(&["the", "cat", "ran"]);
        let r = seq(&["the", "cat", "sat"]);
        let s1 = rouge_n(&c, &r, 1);
        assert!((s1.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((s1.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((s1.f1 - 2.0 / 3.0).abs() < 1e-12);
        let s2 = rouge_n(&c, &r, 2);
        assert_eq!((s2.recall, s2.precision, s2.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn rouge_n_clips_repeated_grams() {
        // candidate repeats "the" three times, reference once
        let s = rouge_n(&seq(&["the", "the", "the"]), &seq(&["the", "cat"]), 1);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rouge_n_longer_than_sequence_is_zero() {
        let x = seq(&["a", "b"]);
        assert_eq!(rouge_n(&x, &x, 3), RougeScore::default());
    }

    #[test]
    fn rouge_l_worked_examples() {
        let s = rouge_l(&seq(&["the", "cat", "ran"]), &seq(&["the", "cat", "sat"]));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let s = rouge_l(&seq(&["a", "b", "c"]), &seq(&["c", "b", "a"]));
        assert!((s.f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            rouge_l(&TokenSeq::default(), &seq(&["x"])),
            RougeScore::default()
        );
    }

    #[test]
    fn lexical_feature_examples() {
        let f = LexicalFeatures::from_texts("the cat ran", "the cat sat");
        assert!((f.rouge1_f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f.rouge2_f, 0.5);
        assert!((f.rouge_l_f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((f.claim_len, f.doc_len, f.len_ratio), (3, 3, 1.0));

        let f = LexicalFeatures::from_texts("hello world", "hello world");
        assert_eq!((f.rouge1_f, f.rouge2_f, f.rouge_l_f), (1.0, 1.0, 1.0));
        assert_eq!((f.claim_len, f.doc_len, f.len_ratio), (2, 2, 1.0));

        let f = LexicalFeatures::from_texts("alpha beta", "gamma delta epsilon");
        assert_eq!((f.rouge1_f, f.rouge2_f, f.rouge_l_f), (0.0, 0.0, 0.0));
        assert_eq!((f.claim_len, f.doc_len), (2, 3));
        assert!((f.len_ratio - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn len_ratio_clamps_empty_sides() {
        let f = LexicalFeatures::from_texts("...", "one two");
        assert_eq!(f.claim_len, 0);
        assert_eq!(f.len_ratio, 0.5);
    }
}
