//! One-hidden-layer MLP entailment head trained with Adam on cross-entropy.
//!
//! Parameters live in a single flat buffer laid out as `W1 | b1 | W2 | b2`
//! (row-major weights, `W1` is `hidden × input`, `W2` is `output × hidden`).
//! Training is fully deterministic: the same config, seed and data give
//! bit-identical weights.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::seeded;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without holdout-loss improvement before stopping; 0 disables.
    pub patience: usize,
    /// Multiplier on the `±sqrt(1/fan_in)` init bound.
    pub init_scale: f64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_dim: 100,
            output_dim,
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 32,
            seed: 42,
            patience: 10,
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidConfig(
                "mlp dimensions must be positive".into(),
            ));
        }
        if !matches!(self.output_dim, 3 | 5) {
            return Err(Error::InvalidConfig(alloc::format!(
                "mlp output_dim must be 3 or 5, got {}",
                self.output_dim
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidConfig(
                "init scale must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.hidden_dim * self.input_dim
            + self.hidden_dim
            + self.output_dim * self.hidden_dim
            + self.output_dim
    }
}

/// A probability vector over the head's output categories.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentProbs(Vec<f64>);

impl EntailmentProbs {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|&z| libm::exp(z - max)).sum();
    logits[k] - max - libm::log(lse)
}

/// Weights for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

impl MlpWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let n = hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim;
        MlpWeights {
            input_dim,
            hidden_dim,
            output_dim,
            params: vec![0.0; n],
        }
    }

    /// Each layer uniform in `±init_scale·sqrt(1/fan_in)`; biases included.
    pub fn init(config: &MlpConfig) -> Self {
        let mut w = Self::zeros(config.input_dim, config.hidden_dim, config.output_dim);
        let mut rng = seeded(config.seed, 0);
        let b1 = config.init_scale * libm::sqrt(1.0 / config.input_dim as f64);
        let b2 = config.init_scale * libm::sqrt(1.0 / config.hidden_dim as f64);
        let split = w.hidden_dim * w.input_dim + w.hidden_dim;
        for (i, p) in w.params.iter_mut().enumerate() {
            let bound = if i < split { b1 } else { b2 };
            let u: f64 = rng.random();
            *p = (2.0 * u - 1.0) * bound;
        }
        w
    }

    /// Assembles weights from the four blocks, checking every shape.
    pub fn from_blocks(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        w1: &[f64],
        b1: &[f64],
        w2: &[f64],
        b2: &[f64],
    ) -> Result<Self> {
        let check = |expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::ShapeMismatch { expected, found })
            }
        };
        check(hidden_dim * input_dim, w1.len())?;
        check(hidden_dim, b1.len())?;
        check(output_dim * hidden_dim, w2.len())?;
        check(output_dim, b2.len())?;
        let mut params = Vec::with_capacity(w1.len() + b1.len() + w2.len() + b2.len());
        params.extend_from_slice(w1);
        params.extend_from_slice(b1);
        params.extend_from_slice(w2);
        params.extend_from_slice(b2);
        Ok(MlpWeights {
            input_dim,
            hidden_dim,
            output_dim,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden_dim * self.input_dim;
        let w2 = b1 + self.hidden_dim;
        let b2 = w2 + self.output_dim * self.hidden_dim;
        [w1, b1, w2, b2]
    }

    pub fn w1(&self) -> &[f64] {
        let [w1, b1, ..] = self.offsets();
        &self.params[w1..b1]
    }

    pub fn b1(&self) -> &[f64] {
        let [_, b1, w2, _] = self.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let [_, _, w2, b2] = self.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let [.., b2] = self.offsets();
        &self.params[b2..]
    }

    /// Rounds every parameter through `f32`, the persisted precision.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.params {
            *p = f64::from(*p as f32);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Returns `(hidden pre-activation, logits)`.
    fn forward_raw(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let [w1, b1, w2, b2] = self.offsets();
        let (ni, nh, no) = (self.input_dim, self.hidden_dim, self.output_dim);
        let p = &self.params;
        let pre: Vec<f64> = (0..nh)
            .map(|j| {
                let row = &p[w1 + j * ni..w1 + (j + 1) * ni];
                p[b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let logits = (0..no)
            .map(|k| {
                let row = &p[w2 + k * nh..w2 + (k + 1) * nh];
                p[b2 + k] + row.iter().zip(&pre).map(|(w, &h)| w * relu(h)).sum::<f64>()
            })
            .collect();
        (pre, logits)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_raw(x).1)
    }

    /// `softmax(W2 · relu(W1 · x + b1) + b2)`
    pub fn forward(&self, x: &[f64]) -> Result<EntailmentProbs> {
        Ok(EntailmentProbs(softmax(&self.logits(x)?)))
    }

    /// Adds this example's cross-entropy gradient into `grad` and returns
    /// its loss.
    fn accumulate(&self, x: &[f64], target: usize, grad: &mut [f64]) -> f64 {
        let [w1, b1, w2, b2] = self.offsets();
        let (ni, nh) = (self.input_dim, self.hidden_dim);
        let (pre, logits) = self.forward_raw(x);
        let loss = -log_softmax_at(&logits, target);
        let mut dlogits = softmax(&logits);
        dlogits[target] -= 1.0;

        let p = &self.params;
        let mut dhidden = vec![0.0; nh];
        for (k, &dz) in dlogits.iter().enumerate() {
            grad[b2 + k] += dz;
            let row = w2 + k * nh;
            for j in 0..nh {
                grad[row + j] += dz * relu(pre[j]);
                dhidden[j] += dz * p[row + j];
            }
        }
        for j in 0..nh {
            if pre[j] <= 0.0 {
                continue;
            }
            let dh = dhidden[j];
            grad[b1 + j] += dh;
            let row = &mut grad[w1 + j * ni..w1 + (j + 1) * ni];
            for (g, &v) in row.iter_mut().zip(x) {
                *g += dh * v;
            }
        }
        loss
    }

    /// Mean cross-entropy over `examples` and its gradient with respect to
    /// the flat parameter buffer.
    pub fn loss_and_gradient(&self, examples: &[Example]) -> Result<(f64, Vec<f64>)> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for ex in examples {
            self.check_example(ex)?;
            loss += self.accumulate(&ex.input, ex.target, &mut grad);
        }
        let n = examples.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((loss / n, grad))
    }

    /// Mean cross-entropy without gradients.
    pub fn mean_loss(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("loss evaluation set"));
        }
        let mut total = 0.0;
        for ex in examples {
            self.check_example(ex)?;
            let (_, logits) = self.forward_raw(&ex.input);
            total -= log_softmax_at(&logits, ex.target);
        }
        Ok(total / examples.len() as f64)
    }

    pub fn accuracy(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("accuracy evaluation set"));
        }
        let mut hits = 0usize;
        for ex in examples {
            self.check_example(ex)?;
            if argmax(&self.forward_raw(&ex.input).1) == ex.target {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        self.check_input(&ex.input)?;
        if ex.target >= self.output_dim {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim,
                found: ex.target + 1,
            });
        }
        Ok(())
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// One training example: an input vector and its target category index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: usize,
}

impl Example {
    pub fn new(input: Vec<f64>, target: usize) -> Self {
        Example { input, target }
    }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(ADAM_BETA2, f64::from(self.step));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPSILON);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean training loss before the first update.
    pub initial_loss: f64,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean holdout loss after each epoch (empty without a holdout set).
    pub holdout_losses: Vec<f64>,
    /// Epoch (0-based) whose weights were returned, when checkpointing.
    pub best_epoch: Option<usize>,
    /// Output categories with no training example.
    pub missing_categories: Vec<usize>,
}

/// Trains a head with mini-batch Adam.
///
/// With a non-empty `holdout` and `config.patience > 0`, the weights from
/// the epoch with the lowest holdout loss are returned and training stops
/// after `patience` epochs without improvement. Missing output categories
/// are reported in the log rather than rejected.
pub fn train(
    config: &MlpConfig,
    examples: &[Example],
    holdout: &[Example],
) -> Result<(MlpWeights, TrainLog)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("training examples"));
    }
    let mut weights = MlpWeights::init(config);
    let mut present = vec![false; config.output_dim];
    for ex in examples.iter().chain(holdout) {
        weights.check_example(ex)?;
    }
    for ex in examples {
        present[ex.target] = true;
    }
    let mut log = TrainLog {
        initial_loss: weights.mean_loss(examples)?,
        missing_categories: (0..config.output_dim).filter(|&k| !present[k]).collect(),
        ..TrainLog::default()
    };

    let checkpointing = !holdout.is_empty() && config.patience > 0;
    let mut best: Option<(f64, MlpWeights)> = None;
    let mut stale = 0usize;

    let mut adam = Adam::new(weights.params.len(), config.learning_rate);
    let mut rng = seeded(config.seed, 1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; weights.params.len()];
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                weights.accumulate(&examples[i].input, examples[i].target, &mut grad);
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            adam.update(&mut weights.params, &grad);
        }
        log.epoch_losses.push(weights.mean_loss(examples)?);

        if checkpointing {
            let hl = weights.mean_loss(holdout)?;
            log.holdout_losses.push(hl);
            if best.as_ref().is_none_or(|(b, _)| hl < *b) {
                best = Some((hl, weights.clone()));
                log.best_epoch = Some(epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    let weights = best.map_or(weights, |(_, w)| w);
    Ok((weights, log))
}

/// Which embeddings a head consumes, concatenated in the listed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadInput {
    /// claim text ⊕ document text
    TextPair,
    /// claim image ⊕ document image
    ImagePair,
    /// claim text ⊕ document text ⊕ claim image ⊕ document image
    AllFour,
}

impl HeadInput {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadInput::TextPair => "text-pair",
            HeadInput::ImagePair => "image-pair",
            HeadInput::AllFour => "all-four",
        }
    }

    pub fn build(self, emb: &PairEmbeddings<'_>) -> Result<Vec<f64>> {
        let parts: &[Option<&[f32]>] = match self {
            HeadInput::TextPair => &[emb.claim_text, emb.doc_text],
            HeadInput::ImagePair => &[emb.claim_image, emb.doc_image],
            HeadInput::AllFour => &[emb.claim_text, emb.doc_text, emb.claim_image, emb.doc_image],
        };
        let mut out = Vec::new();
        for part in parts {
            let part = part.ok_or(Error::EmptyInput("embedding required by head input"))?;
            out.extend(part.iter().map(|&v| f64::from(v)));
        }
        Ok(out)
    }
}

impl FromStr for HeadInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            HeadInput::TextPair,
            HeadInput::ImagePair,
            HeadInput::AllFour,
        ]
        .into_iter()
        .find(|h| h.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown head input {s:?}")))
    }
}

/// The four ways of wiring the head into the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum HeadVariant {
    /// Text embeddings of claim and document, three-way. The default.
    TextPair3,
    ImagePair3,
    /// Two separate three-way heads, outputs concatenated.
    TextAndImagePair3,
    /// All four embeddings into one five-way head, used as a standalone
    /// classifier rather than a fused feature.
    AllConcat5,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 4] = [
        HeadVariant::TextPair3,
        HeadVariant::ImagePair3,
        HeadVariant::TextAndImagePair3,
        HeadVariant::AllConcat5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadVariant::TextPair3 => "text-pair3",
            HeadVariant::ImagePair3 => "image-pair3",
            HeadVariant::TextAndImagePair3 => "text-and-image-pair3",
            HeadVariant::AllConcat5 => "all-concat5",
        }
    }

    pub fn inputs(self) -> &'static [HeadInput] {
        match self {
            HeadVariant::TextPair3 => &[HeadInput::TextPair],
            HeadVariant::ImagePair3 => &[HeadInput::ImagePair],
            HeadVariant::TextAndImagePair3 => &[HeadInput::TextPair, HeadInput::ImagePair],
            HeadVariant::AllConcat5 => &[HeadInput::AllFour],
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            HeadVariant::AllConcat5 => 5,
            _ => 3,
        }
    }

    /// Whether the head output is fed to the forest.
    pub fn is_fused(self) -> bool {
        self != HeadVariant::AllConcat5
    }

    pub fn uses_text(self) -> bool {
        self.inputs().iter().any(|i| *i != HeadInput::ImagePair)
    }

    pub fn uses_images(self) -> bool {
        self.inputs().iter().any(|i| *i != HeadInput::TextPair)
    }

    /// Length of the sub-vector returned by [`head_features`].
    pub fn feature_width(self) -> usize {
        self.inputs().len() * self.output_dim()
    }

    /// Input width given the text and image encoder dimensions.
    pub fn input_dim(input: HeadInput, text_dim: usize, image_dim: usize) -> usize {
        match input {
            HeadInput::TextPair => 2 * text_dim,
            HeadInput::ImagePair => 2 * image_dim,
            HeadInput::AllFour => 2 * text_dim + 2 * image_dim,
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown head variant {s:?}")))
    }
}

/// Whether the fused head feature is the probability vector or a one-hot of
/// its argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum HeadFeatureForm {
    #[default]
    Probabilities,
    OneHot,
}

/// Embeddings available for one pair; `None` where not computed or failed.
#[derive(Debug, Clone, Copy, Default)]
pub struct PairEmbeddings<'a> {
    pub claim_text: Option<&'a [f32]>,
    pub doc_text: Option<&'a [f32]>,
    pub claim_image: Option<&'a [f32]>,
    pub doc_image: Option<&'a [f32]>,
}

/// A trained head and the inputs it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentHead {
    pub input: HeadInput,
    pub weights: MlpWeights,
}

impl EntailmentHead {
    pub fn predict(&self, emb: &PairEmbeddings<'_>) -> Result<EntailmentProbs> {
        self.weights.forward(&self.input.build(emb)?)
    }
}

/// The head sub-vector for one pair: each head's output, in variant order.
pub fn head_features(
    variant: HeadVariant,
    heads: &[EntailmentHead],
    emb: &PairEmbeddings<'_>,
    form: HeadFeatureForm,
) -> Result<Vec<f64>> {
    let inputs = variant.inputs();
    if heads.len() != inputs.len() {
        return Err(Error::ShapeMismatch {
            expected: inputs.len(),
            found: heads.len(),
        });
    }
    let mut out = Vec::with_capacity(variant.feature_width());
    for (head, &input) in heads.iter().zip(inputs) {
        if head.input != input || head.weights.output_dim() != variant.output_dim() {
            return Err(Error::SchemaMismatch(String::from(
                "head does not match the configured variant",
            )));
        }
        let probs = head.predict(emb)?;
        match form {
            HeadFeatureForm::Probabilities => out.extend_from_slice(probs.as_slice()),
            HeadFeatureForm::OneHot => {
                let k = probs.argmax();
                out.extend((0..probs.as_slice().len()).map(|i| if i == k { 1.0 } else { 0.0 }));
            }
        }
    }
    Ok(out)
}
