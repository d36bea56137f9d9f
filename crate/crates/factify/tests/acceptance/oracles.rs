//! Deliberately naive reference implementations, written without reuse of
//! the library code they check.

use factify_core::Label5;

/// Every contiguous n-gram, in order, duplicates kept.
fn ngrams(tokens: &[String], n: usize) -> Vec<&[String]> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| &tokens[i..i + n]).collect()
}

fn prf(overlap: usize, cand_total: usize, ref_total: usize) -> (f64, f64, f64) {
    let recall = if ref_total == 0 {
        0.0
    } else {
        overlap as f64 / ref_total as f64
    };
    let precision = if cand_total == 0 {
        0.0
    } else {
        overlap as f64 / cand_total as f64
    };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (recall, precision, f)
}

/// Clipped n-gram overlap by repeated matching: each candidate n-gram
/// consumes one unused identical reference n-gram.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> (f64, f64, f64) {
    let cand = ngrams(candidate, n);
    let refs = ngrams(reference, n);
    let mut used = vec![false; refs.len()];
    let mut overlap = 0;
    for g in &cand {
        if let Some(j) = (0..refs.len()).find(|&j| !used[j] && refs[j] == *g) {
            used[j] = true;
            overlap += 1;
        }
    }
    prf(overlap, cand.len(), refs.len())
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// LCS length by enumerating every subsequence of `a`.
pub fn lcs_exhaustive(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &a[i])
            .collect();
        if is_subsequence(&sub, b) {
            best = len;
        }
    }
    best
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> (f64, f64, f64) {
    prf(
        lcs_exhaustive(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

/// Confusion counts and weighted F1 from first principles: per label, count
/// matching positions directly.
pub fn metrics(gold: &[Label5], pred: &[Label5]) -> ([[u64; 5]; 5], [f64; 5], f64) {
    let mut counts = [[0u64; 5]; 5];
    for (gi, g) in Label5::ALL.iter().enumerate() {
        for (pi, p) in Label5::ALL.iter().enumerate() {
            counts[gi][pi] = gold
                .iter()
                .zip(pred)
                .filter(|(a, b)| *a == g && *b == p)
                .count() as u64;
        }
    }
    let mut f1s = [0.0; 5];
    let mut weighted = 0.0;
    for (k, l) in Label5::ALL.iter().enumerate() {
        let tp = gold
            .iter()
            .zip(pred)
            .filter(|(a, b)| *a == l && *b == l)
            .count() as f64;
        let predicted = pred.iter().filter(|p| *p == l).count() as f64;
        let support = gold.iter().filter(|g| *g == l).count() as f64;
        let precision = if predicted == 0.0 {
            0.0
        } else {
            tp / predicted
        };
        let recall = if support == 0.0 { 0.0 } else { tp / support };
        f1s[k] = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted += support * f1s[k];
    }
    (counts, f1s, weighted / gold.len() as f64)
}

/// Central finite differences of `f` at `x`, perturbing one coordinate at a
/// time.
pub fn numeric_gradient(x: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Population mean and standard deviation, two-pass.
pub fn mean_std(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
