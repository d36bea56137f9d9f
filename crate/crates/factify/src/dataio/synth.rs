//! Planted-signal synthetic datasets.
//!
//! Each category's defining structure is inserted by construction:
//!
//! | category                | text overlap          | planted text cosine | images          |
//! |-------------------------|-----------------------|---------------------|-----------------|
//! | Support_Text            | paraphrase            | 0.80 – 0.95         | unrelated       |
//! | Support_Multimodal      | paraphrase            | 0.80 – 0.95         | near-duplicate  |
//! | Insufficient_Text       | a few shared words    | 0.05 – 0.35         | unrelated       |
//! | Insufficient_Multimodal | a few shared words    | 0.05 – 0.35         | near-duplicate  |
//! | Refute                  | contiguous span + not | 0.50 – 0.65         | either, 50/50   |
//!
//! With `image_signal` off every image pair is unrelated, so only the text
//! carries signal.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use factify_core::rng::{seeded, SeededRng};
use factify_core::{ClaimDocPair, Label5};
use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{write_split, DatasetManifest, LoadReport, SplitName};
use crate::encoder::mock::planted_marker;
use crate::error::IoContext;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub per_category: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub image_signal: bool,
}

fn default_seed() -> u64 {
    42
}

fn default_true() -> bool {
    true
}

impl SynthSpec {
    pub fn new(per_category: usize, seed: u64) -> Self {
        SynthSpec {
            per_category,
            seed,
            image_signal: true,
        }
    }
}

pub const IMAGE_SIDE: u32 = 32;
const GRID: u32 = 4;
const VOCAB_SIZE: usize = 3000;

/// Generated rows and their rasters, keyed by relative image path.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub train: Vec<ClaimDocPair>,
    pub val: Vec<ClaimDocPair>,
    pub test: Vec<ClaimDocPair>,
    pub images: BTreeMap<String, RgbImage>,
}

impl SynthDataset {
    pub fn split(&self, name: SplitName) -> &[ClaimDocPair] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

fn vocabulary(seed: u64) -> Vec<String> {
    const ONSETS: [&str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
    ];
    const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
    let mut rng = seeded(seed, 2);
    let mut seen = std::collections::BTreeSet::new();
    let mut words = Vec::with_capacity(VOCAB_SIZE);
    while words.len() < VOCAB_SIZE {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| {
                let mut s = String::from(ONSETS[rng.random_range(0..ONSETS.len())]);
                s.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
                s
            })
            .collect();
        if w != "not" && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

struct TextGen<'a> {
    vocab: &'a [String],
}

impl TextGen<'_> {
    fn words(&self, rng: &mut SeededRng, n: usize) -> Vec<&str> {
        (0..n)
            .map(|_| self.vocab[rng.random_range(0..self.vocab.len())].as_str())
            .collect()
    }

    fn pair(&self, rng: &mut SeededRng, label: Label5) -> (Vec<String>, Vec<String>, f64) {
        let claim_len = rng.random_range(10..=16);
        let claim = self.words(rng, claim_len);
        let mut doc: Vec<&str> = Vec::new();
        let sim = match label.collapse() {
            factify_core::Label3::Support => {
                for &w in &claim {
                    if rng.random_bool(0.85) {
                        doc.push(w);
                    }
                    let extra = rng.random_range(0..=1);
                    doc.extend(self.words(rng, extra));
                }
                let tail = rng.random_range(3..=10);
                doc.extend(self.words(rng, tail));
                rng.random_range(0.80..=0.95)
            }
            factify_core::Label3::Insufficient => {
                let n = rng.random_range(14..=26);
                doc = self.words(rng, n);
                for _ in 0..rng.random_range(1..=2) {
                    let at = rng.random_range(0..=doc.len());
                    doc.insert(at, claim[rng.random_range(0..claim.len())]);
                }
                rng.random_range(0.05..=0.35)
            }
            factify_core::Label3::Refute => {
                let span = rng.random_range(claim.len() * 6 / 10..=claim.len() * 9 / 10);
                let start = rng.random_range(0..=claim.len() - span);
                doc.extend_from_slice(&claim[start..start + span]);
                let at = rng.random_range(1..doc.len());
                doc.insert(at, "not");
                let tail = rng.random_range(0..=3);
                doc.extend(self.words(rng, tail));
                rng.random_range(0.50..=0.65)
            }
        };
        let own = |v: Vec<&str>| v.into_iter().map(str::to_owned).collect();
        (own(claim), own(doc), sim)
    }
}

fn is_multimodal(label: Label5, rng: &mut SeededRng) -> bool {
    match label {
        Label5::SupportMultimodal | Label5::InsufficientMultimodal => true,
        Label5::SupportText | Label5::InsufficientText => false,
        Label5::Refute => rng.random_bool(0.5),
    }
}

type Palette = [[u8; 3]; (GRID * GRID) as usize];

fn random_palette(rng: &mut SeededRng) -> Palette {
    let mut p = [[0u8; 3]; (GRID * GRID) as usize];
    for cell in &mut p {
        *cell = [rng.random(), rng.random(), rng.random()];
    }
    p
}

fn jitter(p: &Palette, rng: &mut SeededRng) -> Palette {
    let mut out = *p;
    for cell in &mut out {
        for c in cell.iter_mut() {
            *c = (i16::from(*c) + rng.random_range(-12i16..=12)).clamp(0, 255) as u8;
        }
    }
    out
}

fn render(p: &Palette) -> RgbImage {
    let cell = IMAGE_SIDE / GRID;
    RgbImage::from_fn(IMAGE_SIDE, IMAGE_SIDE, |x, y| {
        Rgb(p[((y / cell) * GRID + x / cell) as usize])
    })
}

/// Generates the dataset in memory. Deterministic in `spec`.
pub fn generate(spec: &SynthSpec) -> SynthDataset {
    let vocab = vocabulary(spec.seed);
    let text = TextGen { vocab: &vocab };
    let mut rng = seeded(spec.seed, 0);
    let n = spec.per_category;
    let mut by_label: [Vec<ClaimDocPair>; 5] = Default::default();
    let mut images = BTreeMap::new();
    let mut next_id = 0u32;
    for _ in 0..n {
        for label in Label5::ALL {
            next_id += 1;
            let id = format!("synth-{next_id:05}");
            let (claim, doc, sim) = text.pair(&mut rng, label);
            let claim_palette = random_palette(&mut rng);
            let doc_palette = if spec.image_signal && is_multimodal(label, &mut rng) {
                jitter(&claim_palette, &mut rng)
            } else {
                random_palette(&mut rng)
            };
            let claim_ref = format!("images/{id}-claim.png");
            let doc_ref = format!("images/{id}-doc.png");
            images.insert(claim_ref.clone(), render(&claim_palette));
            images.insert(doc_ref.clone(), render(&doc_palette));
            by_label[label.index()].push(ClaimDocPair {
                claim_text: format!("{} {}", claim.join(" "), planted_marker(next_id, 1.0)),
                doc_text: format!("{} {}", doc.join(" "), planted_marker(next_id, sim)),
                id,
                claim_image_ref: claim_ref,
                doc_image_ref: doc_ref,
                gold_label: Some(label),
            });
        }
    }

    let mut split_rng = seeded(spec.seed, 1);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut rows in by_label {
        rows.shuffle(&mut split_rng);
        let n_train = (rows.len() as f64 * 0.70).round() as usize;
        let n_val = ((rows.len() as f64 * 0.15).round() as usize).min(rows.len() - n_train);
        let rest = rows.split_off(n_train);
        train.extend(rows);
        let mut rest = rest;
        let tail = rest.split_off(n_val);
        val.extend(rest);
        test.extend(tail);
    }
    for split in [&mut train, &mut val, &mut test] {
        split.shuffle(&mut split_rng);
    }
    SynthDataset {
        train,
        val,
        test,
        images,
    }
}

/// Generates the dataset and writes `train.csv`, `val.csv`, `test.csv` and
/// `images/` under `out`.
pub fn write_synth(spec: &SynthSpec, out: &Path) -> Result<[DatasetManifest; 3]> {
    let data = generate(spec);
    let img_dir = out.join("images");
    std::fs::create_dir_all(&img_dir).at(&img_dir)?;
    for (rel, img) in &data.images {
        let path = out.join(rel);
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    }
    let manifest = |split: SplitName| -> Result<DatasetManifest> {
        let path = out.join(format!("{split}.csv"));
        write_split(&path, data.split(split))?;
        Ok(DatasetManifest {
            split,
            rows: data.split(split).to_vec(),
            source_path: path,
            report: LoadReport::default(),
        })
    };
    Ok([
        manifest(SplitName::Train)?,
        manifest(SplitName::Val)?,
        manifest(SplitName::Test)?,
    ])
}

/// Paths `write_synth` produces for each split.
pub fn split_paths(out: &Path) -> [PathBuf; 3] {
    [
        out.join("train.csv"),
        out.join("val.csv"),
        out.join("test.csv"),
    ]
}
