//! Criteria over the numeric kernels: lexical overlap, cosine, the
//! entailment head, metrics, normalization and the forest.

use std::time::Instant;

use factify_core::features::{FeatureSchema, FeatureVector};
use factify_core::forest::{ForestConfig, RandomForest};
use factify_core::lexical::{lcs_len, rouge_l, rouge_n, TokenSeq};
use factify_core::metrics::{confusion, weighted_f1};
use factify_core::mlp::{train, Example, MlpConfig, MlpWeights};
use factify_core::normalize::NormalizerState;
use factify_core::rng::{seeded, SeededRng};
use factify_core::similarity::cosine;
use factify_core::{Error, Label5};
use rand::Rng;

use crate::oracles;
use crate::Outcome;

fn words(rng: &mut SeededRng, max_len: usize, alphabet: &[&str]) -> Vec<String> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_owned())
        .collect()
}

fn triple(s: factify_core::lexical::RougeScore) -> (f64, f64, f64) {
    (s.recall, s.precision, s.f1)
}

fn gap(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    (a.0 - b.0)
        .abs()
        .max((a.1 - b.1).abs())
        .max((a.2 - b.2).abs())
}

pub fn rouge_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(1, 0);
    let mut worst = 0.0f64;
    let mut lcs_mismatches = 0;
    for _ in 0..500 {
        let a = words(&mut rng, 8, &["a", "b", "c", "d"]);
        let b = words(&mut rng, 8, &["a", "b", "c", "d"]);
        let (ta, tb) = (TokenSeq::from_words(&a), TokenSeq::from_words(&b));
        for n in 1..=3 {
            worst = worst.max(gap(
                triple(rouge_n(&ta, &tb, n)),
                oracles::rouge_n(&a, &b, n),
            ));
        }
        worst = worst.max(gap(triple(rouge_l(&ta, &tb)), oracles::rouge_l(&a, &b)));
        if lcs_len(&a, &b) != oracles::lcs_exhaustive(&a, &b) {
            lcs_mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::check(
        worst <= 1e-12 && lcs_mismatches == 0 && secs < 10.0,
        format!("500 pairs, max |diff| {worst:.1e}, LCS mismatches {lcs_mismatches}, {secs:.2}s"),
    )
}

fn random_vec(rng: &mut SeededRng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random_range(-10.0f32..10.0)).collect()
}

pub fn cosine_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(2, 0);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..1000 {
        let dim = 2 * rng.random_range(1..=32);
        let a = random_vec(&mut rng, dim);
        let b = random_vec(&mut rng, dim);
        let cab = cosine(&a, &b).unwrap();
        worst = worst.max((cosine(&a, &a).unwrap() - 1.0).abs());
        worst = worst.max((cab - cosine(&b, &a).unwrap()).abs());
        // Powers of two scale f32 values exactly, so the scaled input is
        // exactly s·a.
        let s = 2f32.powi(rng.random_range(-20..=20));
        let scaled: Vec<f32> = a.iter().map(|v| v * s).collect();
        worst = worst.max((cosine(&scaled, &b).unwrap() - cab).abs());
        // Small integers with an integer scale are also exact in f32.
        let ia: Vec<f32> = (0..dim)
            .map(|_| rng.random_range(-100i32..=100) as f32)
            .collect();
        let ib: Vec<f32> = (0..dim)
            .map(|_| rng.random_range(-100i32..=100) as f32)
            .collect();
        let k = rng.random_range(1..=1000) as f32;
        let ka: Vec<f32> = ia.iter().map(|v| v * k).collect();
        if ia.iter().any(|&v| v != 0.0) && ib.iter().any(|&v| v != 0.0) {
            worst = worst.max((cosine(&ka, &ib).unwrap() - cosine(&ia, &ib).unwrap()).abs());
        }
        // (x, y) -> (-y, x) on each coordinate pair is exactly orthogonal.
        let orth: Vec<f32> = a.chunks(2).flat_map(|p| [-p[1], p[0]]).collect();
        worst = worst.max(cosine(&a, &orth).unwrap().abs());
        if !(-1.0..=1.0).contains(&cab) {
            failures.push(format!("pair {i}: cosine {cab} out of range"));
        }
    }
    let zero = matches!(cosine(&[0.0; 4], &[1.0; 4]), Err(Error::ZeroVector));
    if !zero {
        failures.push("zero vector not rejected".into());
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::check(
        worst <= 1e-9 && failures.is_empty() && secs < 5.0,
        format!(
            "1000 pairs, max |diff| {worst:.1e}, {secs:.2}s{}",
            failures.join("; ")
        ),
    )
}

pub fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for draw in 0..20u64 {
        let mut rng = seeded(3, draw);
        let mut cfg = MlpConfig::new(4, 3);
        cfg.hidden_dim = 3;
        cfg.seed = draw;
        let weights = MlpWeights::init(&cfg);
        let batch: Vec<Example> = (0..5)
            .map(|_| {
                let x = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                Example::new(x, rng.random_range(0..3))
            })
            .collect();
        let (_, analytic) = weights.loss_and_gradient(&batch).unwrap();
        let numeric = oracles::numeric_gradient(weights.params(), 1e-5, |p| {
            let mut w = weights.clone();
            w.params_mut().copy_from_slice(p);
            w.mean_loss(&batch).unwrap()
        });
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = diff / (norm(&analytic) + norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::check(
        worst < 1e-4 && secs < 10.0,
        format!("20 draws on 4-3-3, max relative error {worst:.2e}, {secs:.2}s"),
    )
}

/// Three well-separated Gaussian blobs in four dimensions.
fn blobs(n_per: usize, seed: u64) -> Vec<Example> {
    let centers = [
        [3.0, 0.0, 0.0, 0.0],
        [0.0, 3.0, 0.0, 0.0],
        [0.0, 0.0, 3.0, 0.0],
    ];
    let mut rng = seeded(seed, 0);
    let mut out = Vec::new();
    for _ in 0..n_per {
        for (k, c) in centers.iter().enumerate() {
            let x = c.iter().map(|m| m + rng.random_range(-0.5..0.5)).collect();
            out.push(Example::new(x, k));
        }
    }
    out
}

pub fn head_overfit() -> Outcome {
    let data = blobs(10, 4);
    let mut cfg = MlpConfig::new(4, 3);
    cfg.init_scale = 1e-3;
    cfg.patience = 0;
    cfg.max_epochs = 200;
    let (weights, log) = train(&cfg, &data, &[]).unwrap();
    let acc = weights.accuracy(&data).unwrap();
    let ln3 = 3f64.ln();
    let first_perfect = {
        // Replay the schedule epoch by epoch to find when accuracy hits 1.
        let mut found = None;
        for epochs in 1..=200 {
            let mut c = cfg.clone();
            c.max_epochs = epochs;
            let (w, _) = train(&c, &data, &[]).unwrap();
            if w.accuracy(&data).unwrap() == 1.0 {
                found = Some(epochs);
                break;
            }
        }
        found
    };
    Outcome::check(
        acc == 1.0 && (log.initial_loss - ln3).abs() < 0.05,
        format!(
            "30 points, accuracy {acc:.3} after {} epochs (first perfect at epoch {}), initial loss {:.4} vs ln 3 = {ln3:.4}",
            log.epoch_losses.len(),
            first_perfect.map_or("never".into(), |e| e.to_string()),
            log.initial_loss
        ),
    )
}

fn random_labels(rng: &mut SeededRng, n: usize) -> Vec<Label5> {
    (0..n)
        .map(|_| Label5::ALL[rng.random_range(0..5)])
        .collect()
}

pub fn metric_oracle() -> Outcome {
    let mut rng = seeded(5, 0);
    let mut worst = 0.0f64;
    let mut confusion_mismatch = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let gold = random_labels(&mut rng, n);
        // Mix of correlated and random predictions.
        let pred: Vec<Label5> = gold
            .iter()
            .map(|&g| {
                if rng.random_bool(0.5) {
                    g
                } else {
                    Label5::ALL[rng.random_range(0..5)]
                }
            })
            .collect();
        let (counts, f1s, weighted) = oracles::metrics(&gold, &pred);
        let report = weighted_f1(&gold, &pred).unwrap();
        if confusion(&gold, &pred).unwrap().counts != counts || report.confusion.counts != counts {
            confusion_mismatch += 1;
        }
        worst = worst.max((report.weighted_f1 - weighted).abs());
        for l in Label5::ALL {
            worst = worst.max((report.f1(l) - f1s[l.index()]).abs());
        }
    }
    use Label5::{SupportMultimodal as B, SupportText as A};
    let worked = weighted_f1(&[A, A, B], &[A, B, B]).unwrap().weighted_f1;
    let worked_ok = (worked - 2.0 / 3.0).abs() <= 1e-15;
    Outcome::check(
        worst <= 1e-12 && confusion_mismatch == 0 && worked_ok,
        format!(
            "100 lists, max |diff| {worst:.1e}, confusion mismatches {confusion_mismatch}; worked example {worked:.17}"
        ),
    )
}

pub fn normalizer() -> Outcome {
    let mut rng = seeded(6, 0);
    let names: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
    let schema = FeatureSchema::new(names).unwrap();
    let scales = [1e-3, 1.0, 1e3, 1e6, 0.0, 42.0];
    let rows: Vec<FeatureVector> = (0..300)
        .map(|_| {
            let v = scales
                .iter()
                .enumerate()
                .map(|(j, &s)| {
                    if j == 4 {
                        7.5
                    } else {
                        s * rng.random_range(-1.0..1.0) + 100.0 * j as f64
                    }
                })
                .collect();
            FeatureVector::new(schema.clone(), v).unwrap()
        })
        .collect();
    let state = NormalizerState::fit(&rows, "train").unwrap();
    let out: Vec<FeatureVector> = rows.iter().map(|r| state.apply(r).unwrap()).collect();
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    let mut constant_ok = true;
    for j in 0..6 {
        let col: Vec<f64> = out.iter().map(|r| r.values()[j]).collect();
        if j == 4 {
            constant_ok &= col.iter().all(|&v| v == 0.0);
            continue;
        }
        let (m, s) = oracles::mean_std(&col);
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((s - 1.0).abs());
    }
    Outcome::check(
        worst_mean < 1e-9 && worst_std < 1e-9 && constant_ok,
        format!("max |mean| {worst_mean:.1e}, max |std - 1| {worst_std:.1e}, constant column -> 0: {constant_ok}"),
    )
}

fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded(seed, 0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let class = i % 5;
        let row = vec![
            class as f64 + rng.random_range(0.05..0.95),
            rng.random_range(-1.0..1.0),
            (4 - class) as f64 * 2.0 + rng.random_range(0.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        x.push(row);
        y.push(class);
    }
    (x, y)
}

fn xor(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded(seed, 0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        x.push(vec![a, b]);
        y.push(usize::from((a > 0.0) != (b > 0.0)));
    }
    (x, y)
}

fn accuracy(forest: &RandomForest, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let hits = x
        .iter()
        .zip(y)
        .filter(|(r, &c)| forest.predict(r).unwrap().class == c)
        .count();
    hits as f64 / y.len() as f64
}

pub fn forest() -> Outcome {
    let (x, y) = separable(200, 7);
    let (hx, _) = separable(100, 8);
    let cfg = ForestConfig::default();
    let a = RandomForest::fit(&cfg, &x, &y, 5).unwrap();
    let b = RandomForest::fit(&cfg, &x, &y, 5).unwrap();
    let preds = |f: &RandomForest| {
        hx.iter()
            .map(|r| f.predict(r).unwrap().class)
            .collect::<Vec<_>>()
    };
    let same = preds(&a) == preds(&b) && a.to_bytes() == b.to_bytes();
    let train_acc = accuracy(&a, &x, &y);

    let (xx, xy) = xor(400, 9);
    let stump_cfg = ForestConfig {
        n_trees: 1,
        max_depth: 1,
        ..ForestConfig::default()
    };
    let stump = RandomForest::fit(&stump_cfg, &xx, &xy, 2).unwrap();
    let stump_acc = accuracy(&stump, &xx, &xy);
    Outcome::check(
        same && train_acc >= 0.99 && stump_acc <= 0.75,
        format!(
            "same-seed predictions identical: {same}; training accuracy {train_acc:.3} on 200 rows; depth-1 tree on XOR {stump_acc:.3}"
        ),
    )
}
