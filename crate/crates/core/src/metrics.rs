//! Confusion matrices and support-weighted F1.

use alloc::string::String;
use core::fmt::Write;

use crate::label::Label5;
use crate::{Error, Result};

const K: usize = Label5::COUNT;

/// Rows are gold labels, columns predictions, both in [`Label5::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn get(&self, gold: Label5, pred: Label5) -> u64 {
        self.counts[gold.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Gold support per label.
    pub fn row_sums(&self) -> [u64; K] {
        self.counts.map(|r| r.iter().sum())
    }

    /// Prediction count per label.
    pub fn col_sums(&self) -> [u64; K] {
        let mut out = [0; K];
        for row in &self.counts {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    pub fn is_diagonal(&self) -> bool {
        (0..K).all(|g| (0..K).all(|p| g == p || self.counts[g][p] == 0))
    }

    /// Header row of predicted labels, then one row per gold label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gold\\pred");
        for l in Label5::ALL {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for g in Label5::ALL {
            s.push_str(g.as_str());
            for c in self.counts[g.index()] {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

fn check_lengths(gold: &[Label5], pred: &[Label5]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("label lists"));
    }
    Ok(())
}

pub fn confusion(gold: &[Label5], pred: &[Label5]) -> Result<ConfusionMatrix> {
    check_lengths(gold, pred)?;
    let mut m = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(pred) {
        m.counts[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Indexed by [`Label5::index`].
    pub per_category: [CategoryScores; K],
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
    pub n_rows: u64,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let n = confusion.total();
        if n == 0 {
            return Err(Error::EmptyInput("confusion matrix"));
        }
        let support = confusion.row_sums();
        let predicted = confusion.col_sums();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut per_category = [CategoryScores::default(); K];
        let mut weighted = 0.0;
        for k in 0..K {
            let tp = confusion.counts[k][k];
            let precision = ratio(tp, predicted[k]);
            let recall = ratio(tp, support[k]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_category[k] = CategoryScores {
                precision,
                recall,
                f1,
                support: support[k],
            };
            weighted += support[k] as f64 * f1;
        }
        Ok(EvalReport {
            per_category,
            weighted_f1: weighted / n as f64,
            confusion,
            n_rows: n,
        })
    }

    pub fn f1(&self, label: Label5) -> f64 {
        self.per_category[label.index()].f1
    }

    /// Plain-text table of per-category scores followed by the confusion
    /// matrix.
    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>9} {:>9} {:>8}",
            "category", "precision", "recall", "f1", "support"
        );
        for l in Label5::ALL {
            let c = &self.per_category[l.index()];
            let _ = writeln!(
                s,
                "{:<24} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                l.as_str(),
                c.precision,
                c.recall,
                c.f1,
                c.support
            );
        }
        let _ = writeln!(
            s,
            "{:<24} {:>29.4} {:>8}",
            "weighted avg f1", self.weighted_f1, self.n_rows
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion (rows = gold, columns = predicted)");
        let _ = write!(s, "{:<24}", "");
        for i in 0..K {
            let _ = write!(s, " {:>7}", alloc::format!("[{i}]"));
        }
        s.push('\n');
        for g in Label5::ALL {
            let _ = write!(
                s,
                "{:<24}",
                alloc::format!("[{}] {}", g.index(), g.as_str())
            );
            for c in self.confusion.counts[g.index()] {
                let _ = write!(s, " {c:>7}");
            }
            s.push('\n');
        }
        s
    }
}

/// Per-category and support-weighted F1. Undefined precision or recall
/// counts as 0; labels absent from `gold` carry zero weight.
pub fn weighted_f1(gold: &[Label5], pred: &[Label5]) -> Result<EvalReport> {
    EvalReport::from_confusion(confusion(gold, pred)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use Label5::*;

    #[test]
    fn confusion_examples() {
        let m = confusion(&[Refute, Refute], &[Refute, Refute]).unwrap();
        assert_eq!(m.get(Refute, Refute), 2);
        assert_eq!(m.total(), 2);

        let m = confusion(&[SupportText], &[Refute]).unwrap();
        assert_eq!(m.get(SupportText, Refute), 1);
        assert_eq!(m.total(), 1);
        assert!(!m.is_diagonal());

        let m = confusion(
            &[SupportText, Refute, InsufficientText],
            &[Refute, Refute, SupportText],
        )
        .unwrap();
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn length_errors() {
        assert!(matches!(
            confusion(&[Refute], &[]),
            Err(Error::LengthMismatch { left: 1, right: 0 })
        ));
        assert!(weighted_f1(&[], &[]).is_err());
    }

    #[test]
    fn two_category_worked_example() {
        let r = weighted_f1(
            &[SupportText, SupportText, Refute],
            &[SupportText, Refute, Refute],
        )
        .unwrap();
        assert!((r.f1(SupportText) - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1(Refute) - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.weighted_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        let g = [SupportText, InsufficientMultimodal, Refute, Refute];
        let r = weighted_f1(&g, &g).unwrap();
        assert_eq!(r.weighted_f1, 1.0);
        assert!(r.confusion.is_diagonal());
    }

    #[test]
    fn constant_prediction_on_balanced_gold() {
        let gold: Vec<Label5> = Label5::ALL.iter().flat_map(|&l| [l; 4]).collect();
        let pred = [SupportMultimodal; 20];
        let r = weighted_f1(&gold, &pred).unwrap();
        assert!((r.weighted_f1 - 1.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn csv_and_table_render() {
        let r = weighted_f1(&[Refute, SupportText], &[Refute, Refute]).unwrap();
        let csv = r.confusion.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().last().unwrap().starts_with("Refute,0,0,0,0,1"));
        assert!(r.to_text_table().contains("weighted avg f1"));
    }
}
