//! Hashed-feature linear classifier: mean-pooled feature embeddings, a
//! linear projection and a softmax, trained with plain SGD.
//!
//! Model file layout (little-endian), see `docs/model-format.md`:
//!
//! ```text
//! magic "ILID" | version u32 | dim u32 | word_vocab_size u64 | bucket_count u64
//! | class_count u32 | min_char_ngram u32 | max_char_ngram u32 | word_ngrams u32
//! | word_vocab_limit u64 | lowercase_roman u8
//! | class_count x (len u32, utf-8 tag)
//! | word_vocab_size x (len u32, utf-8 word, count u64)
//! | embeddings f32[(word_vocab_size + bucket_count) * dim]   (row-major)
//! | output f32[dim * class_count]                             (row-major)
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{Featurizer, FeaturizerConfig, WordVocab};
use crate::label::{parse_tag, LabeledExample, LanguageClass, Prediction, Registry, Stage};
use crate::script::ScriptCode;

pub const MAGIC: &[u8; 4] = b"ILID";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Decays linearly to 0 over all updates.
    pub initial_lr: f32,
    pub seed: u64,
    pub min_word_count: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 8,
            epochs: 5,
            initial_lr: 0.1,
            seed: 0,
            min_word_count: 1,
        }
    }
}

impl TrainConfig {
    /// Settings of the high-capacity stage-2 reference model.
    pub fn wide() -> Self {
        TrainConfig {
            dim: 64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim < 1 {
            return Err("dim must be >= 1".into());
        }
        if self.epochs < 1 {
            return Err("epochs must be >= 1".into());
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err("initial_lr must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training corpus has a single class ({0}); at least 2 are required")]
    SingleClass(LanguageClass),
    #[error("label {label} of record {id} is not in the registry")]
    UnknownLabel { label: LanguageClass, id: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training record produced any feature")]
    NoFeatures,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated model file")]
    Truncated,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Error)]
#[error("invalid model shape: {0}")]
pub struct ShapeError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    featurizer: Featurizer,
    labels: Vec<LanguageClass>,
    dim: usize,
    /// `feature_count x dim`, row-major.
    embeddings: Vec<f32>,
    /// `dim x labels.len()`, row-major.
    output: Vec<f32>,
}

impl LinearModel {
    pub fn from_parts(
        featurizer: Featurizer,
        labels: Vec<LanguageClass>,
        dim: usize,
        embeddings: Vec<f32>,
        output: Vec<f32>,
    ) -> Result<Self, ShapeError> {
        if labels.is_empty() {
            return Err(ShapeError("no labels".into()));
        }
        if dim == 0 {
            return Err(ShapeError("dim must be >= 1".into()));
        }
        let rows = featurizer.feature_count();
        if embeddings.len() != rows * dim {
            return Err(ShapeError(format!(
                "embeddings have {} values, expected {rows} x {dim}",
                embeddings.len()
            )));
        }
        if output.len() != dim * labels.len() {
            return Err(ShapeError(format!(
                "output has {} values, expected {dim} x {}",
                output.len(),
                labels.len()
            )));
        }
        Ok(LinearModel {
            featurizer,
            labels,
            dim,
            embeddings,
            output,
        })
    }

    pub fn labels(&self) -> &[LanguageClass] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn config(&self) -> &FeaturizerConfig {
        self.featurizer.config()
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn output(&self) -> &[f32] {
        &self.output
    }

    pub fn all_finite(&self) -> bool {
        self.embeddings.iter().chain(&self.output).all(|w| w.is_finite())
    }

    /// Stage attribution when the model is used on its own: romanized if
    /// every label is Latin-script (or `other`), native otherwise.
    pub fn default_stage(&self) -> Stage {
        let roman = self
            .labels
            .iter()
            .all(|c| c.script().is_none_or(|s| s == ScriptCode::LATN));
        if roman {
            Stage::RomanLinear
        } else {
            Stage::NativeLinear
        }
    }

    /// Full distribution over `labels()` for raw (unnormalized) text. Empty
    /// when the text yields no features.
    pub fn distribution(&self, text: &str) -> Option<Vec<f64>> {
        let features = self.featurizer.featurize(text);
        if features.is_empty() {
            return None;
        }
        let mut hidden = vec![0f32; self.dim];
        mean_pool(&self.embeddings, self.dim, &features.ids, &mut hidden);
        let k = self.labels.len();
        let mut logits = vec![0f64; k];
        for (j, h) in hidden.iter().enumerate() {
            let row = &self.output[j * k..(j + 1) * k];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += (*h * *w) as f64;
            }
        }
        Some(softmax(&logits))
    }

    /// Top-`k` prediction. Ties rank the lower class index first. Text
    /// without features gets the uniform distribution, listing `other` first
    /// when the model knows it.
    pub fn predict(&self, text: &str, k: usize) -> Prediction {
        self.predict_as(text, k, self.default_stage())
    }

    pub fn predict_as(&self, text: &str, k: usize, stage: Stage) -> Prediction {
        let n = self.labels.len();
        let mut ranked: Vec<(LanguageClass, f64)> = match self.distribution(text) {
            Some(probs) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
                order.into_iter().map(|i| (self.labels[i], probs[i])).collect()
            }
            None => {
                let p = 1.0 / n as f64;
                let mut all: Vec<(LanguageClass, f64)> = self.labels.iter().map(|c| (*c, p)).collect();
                if let Some(pos) = all.iter().position(|(c, _)| c.is_other()) {
                    let other = all.remove(pos);
                    all.insert(0, other);
                }
                all
            }
        };
        ranked.truncate(k.clamp(1, n));
        Prediction::new(ranked, stage)
    }

    pub fn predict_batch<S: AsRef<str> + Sync>(&self, texts: &[S], k: usize) -> Vec<Prediction> {
        texts.par_iter().map(|t| self.predict(t.as_ref(), k)).collect()
    }

    /// Probability the model assigns to `class` (0 if the class is unknown to it).
    pub fn probability_of(&self, text: &str, class: &LanguageClass) -> f64 {
        self.predict(text, self.labels.len()).probability_of(class)
    }

    /// Exact size in bytes of the serialized model.
    pub fn size_bytes(&self) -> u64 {
        let header = 4 + 4 + 4 + 8 + 8 + 4 + 4 + 4 + 4 + 8 + 1;
        let labels: usize = self.labels.iter().map(|c| 4 + c.tag().len()).sum();
        let vocab: usize = self
            .featurizer
            .vocab()
            .entries()
            .iter()
            .map(|(w, _)| 4 + w.len() + 8)
            .sum();
        (header + labels + vocab + 4 * (self.embeddings.len() + self.output.len())) as u64
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cfg = self.featurizer.config();
        let vocab = self.featurizer.vocab();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(vocab.len() as u64).to_le_bytes())?;
        w.write_all(&(cfg.bucket_count as u64).to_le_bytes())?;
        w.write_all(&(self.labels.len() as u32).to_le_bytes())?;
        w.write_all(&(cfg.min_char_ngram as u32).to_le_bytes())?;
        w.write_all(&(cfg.max_char_ngram as u32).to_le_bytes())?;
        w.write_all(&(cfg.word_ngrams as u32).to_le_bytes())?;
        w.write_all(&(cfg.word_vocab_limit as u64).to_le_bytes())?;
        w.write_all(&[cfg.lowercase_roman as u8])?;
        for label in &self.labels {
            write_str(&mut w, &label.tag())?;
        }
        for (word, count) in vocab.entries() {
            write_str(&mut w, word)?;
            w.write_all(&count.to_le_bytes())?;
        }
        for v in self.embeddings.iter().chain(&self.output) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
        let path = path.as_ref();
        let io = |source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        self.write_to(BufWriter::new(file)).map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelIoError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelIoError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelIoError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelIoError::UnsupportedVersion { found: version });
        }
        let dim = r.u32()? as usize;
        let vocab_size = r.u64()? as usize;
        let bucket_count = r.u64()? as usize;
        let class_count = r.u32()? as usize;
        let config = FeaturizerConfig {
            min_char_ngram: r.u32()? as usize,
            max_char_ngram: r.u32()? as usize,
            word_ngrams: r.u32()? as usize,
            bucket_count,
            word_vocab_limit: r.u64()? as usize,
            lowercase_roman: match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(ModelIoError::Corrupt(format!("bad lowercase flag {b}"))),
            },
        };
        config.validate().map_err(ModelIoError::Corrupt)?;
        if dim == 0 || class_count == 0 {
            return Err(ModelIoError::Corrupt("zero dim or class count".into()));
        }
        let mut labels = Vec::with_capacity(class_count.min(1 << 16));
        for _ in 0..class_count {
            let tag = r.string()?;
            labels.push(parse_tag(&tag).map_err(|e| ModelIoError::Corrupt(e.to_string()))?);
        }
        let mut words = Vec::with_capacity(vocab_size.min(1 << 20));
        for _ in 0..vocab_size {
            let word = r.string()?;
            let count = r.u64()?;
            words.push((word, count));
        }
        let vocab = WordVocab::from_entries(words);
        if vocab.len() != vocab_size {
            return Err(ModelIoError::Corrupt("duplicate vocabulary words".into()));
        }
        let featurizer = Featurizer::new(config, vocab);
        let rows = featurizer.feature_count();
        let embeddings = r.f32s(rows.checked_mul(dim).ok_or(ModelIoError::Truncated)?)?;
        let output = r.f32s(dim * class_count)?;
        if r.pos != bytes.len() {
            return Err(ModelIoError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        LinearModel::from_parts(featurizer, labels, dim, embeddings, output)
            .map_err(|e| ModelIoError::Corrupt(e.to_string()))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        let end = self.pos.checked_add(n).ok_or(ModelIoError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(ModelIoError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelIoError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ModelIoError::Corrupt("invalid utf-8 string".into()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ModelIoError> {
        let bytes = self.take(n.checked_mul(4).ok_or(ModelIoError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn mean_pool(embeddings: &[f32], dim: usize, ids: &[u32], hidden: &mut [f32]) {
    hidden.iter_mut().for_each(|h| *h = 0.0);
    for &id in ids {
        let row = &embeddings[id as usize * dim..(id as usize + 1) * dim];
        for (h, e) in hidden.iter_mut().zip(row) {
            *h += e;
        }
    }
    let inv = 1.0 / ids.len() as f32;
    hidden.iter_mut().for_each(|h| *h *= inv);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of one example and its gradients, in f64.
///
/// `embeddings` is `rows x dim`, `output` is `dim x classes`. Returns the loss
/// and gradients with the same shapes as the inputs.
pub fn loss_and_gradients(
    embeddings: &[f64],
    output: &[f64],
    dim: usize,
    classes: usize,
    ids: &[u32],
    label: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = ids.len() as f64;
    let mut hidden = vec![0f64; dim];
    for &id in ids {
        for j in 0..dim {
            hidden[j] += embeddings[id as usize * dim + j] / n;
        }
    }
    let logits: Vec<f64> = (0..classes)
        .map(|c| (0..dim).map(|j| hidden[j] * output[j * classes + c]).sum())
        .collect();
    let probs = softmax(&logits);
    let loss = -probs[label].ln();
    let g: Vec<f64> = (0..classes)
        .map(|c| probs[c] - if c == label { 1.0 } else { 0.0 })
        .collect();
    let mut d_out = vec![0f64; output.len()];
    let mut d_hidden = vec![0f64; dim];
    for j in 0..dim {
        for c in 0..classes {
            d_out[j * classes + c] = hidden[j] * g[c];
            d_hidden[j] += output[j * classes + c] * g[c];
        }
    }
    let mut d_emb = vec![0f64; embeddings.len()];
    for &id in ids {
        for j in 0..dim {
            d_emb[id as usize * dim + j] += d_hidden[j] / n;
        }
    }
    (loss, d_emb, d_out)
}

struct Scratch {
    hidden: Vec<f32>,
    grad_hidden: Vec<f32>,
    probs: Vec<f32>,
}

/// One SGD update on a single example; returns the loss before the update.
#[allow(clippy::too_many_arguments)]
fn sgd_step(
    embeddings: &mut [f32],
    output: &mut [f32],
    dim: usize,
    classes: usize,
    ids: &[u32],
    label: usize,
    lr: f32,
    s: &mut Scratch,
) -> f32 {
    mean_pool(embeddings, dim, ids, &mut s.hidden);
    s.probs.iter_mut().for_each(|p| *p = 0.0);
    for j in 0..dim {
        let h = s.hidden[j];
        let row = &output[j * classes..(j + 1) * classes];
        for (p, w) in s.probs.iter_mut().zip(row) {
            *p += h * w;
        }
    }
    let max = s.probs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0f32;
    for p in s.probs.iter_mut() {
        *p = (*p - max).exp();
        sum += *p;
    }
    s.probs.iter_mut().for_each(|p| *p /= sum);
    let loss = -s.probs[label].max(1e-30).ln();
    s.probs[label] -= 1.0;
    // s.probs now holds dL/dlogits.
    for j in 0..dim {
        let row = &mut output[j * classes..(j + 1) * classes];
        let mut gh = 0f32;
        for (w, g) in row.iter_mut().zip(&s.probs) {
            gh += *w * g;
            *w -= lr * s.hidden[j] * g;
        }
        s.grad_hidden[j] = gh;
    }
    let scale = lr / ids.len() as f32;
    for &id in ids {
        let row = &mut embeddings[id as usize * dim..(id as usize + 1) * dim];
        for (e, g) in row.iter_mut().zip(&s.grad_hidden) {
            *e -= scale * g;
        }
    }
    loss
}

/// Per-epoch mean training loss, reported alongside the model.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub examples: usize,
    pub skipped_empty: usize,
    pub epoch_loss: Vec<f64>,
}

/// Trains a model whose label set is the registry classes present in the
/// corpus, in registry order. Single-threaded and bit-reproducible for a
/// fixed seed.
pub fn train(
    corpus: &[LabeledExample],
    registry: &Registry,
    featurizer_config: FeaturizerConfig,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainLog), TrainError> {
    config.validate().map_err(TrainError::InvalidConfig)?;
    featurizer_config.validate().map_err(TrainError::InvalidConfig)?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut present = vec![false; registry.len()];
    for ex in corpus {
        let idx = registry.index_of(&ex.label).ok_or_else(|| TrainError::UnknownLabel {
            label: ex.label,
            id: ex.id.to_string(),
        })?;
        present[idx] = true;
    }
    let labels: Vec<LanguageClass> = registry
        .classes()
        .iter()
        .zip(&present)
        .filter(|(_, p)| **p)
        .map(|(c, _)| *c)
        .collect();
    if labels.len() < 2 {
        return Err(TrainError::SingleClass(labels[0]));
    }
    let label_index = |c: &LanguageClass| labels.iter().position(|l| l == c).expect("label present");

    let texts: Vec<String> = corpus
        .iter()
        .map(|ex| crate::features::normalize(&ex.text, &featurizer_config))
        .collect();
    let vocab = WordVocab::build(
        texts.iter().map(String::as_str),
        config.min_word_count,
        featurizer_config.word_vocab_limit,
    );
    let featurizer = Featurizer::new(featurizer_config, vocab);

    let mut examples: Vec<(Vec<u32>, usize)> = Vec::with_capacity(corpus.len());
    let mut log = TrainLog::default();
    for (ex, text) in corpus.iter().zip(&texts) {
        let ids = featurizer.extract(text).ids;
        if ids.is_empty() {
            log.skipped_empty += 1;
            continue;
        }
        examples.push((ids, label_index(&ex.label)));
    }
    if examples.is_empty() {
        return Err(TrainError::NoFeatures);
    }
    log.examples = examples.len();

    let dim = config.dim;
    let classes = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 1.0 / dim as f32;
    let mut embeddings: Vec<f32> = (0..featurizer.feature_count() * dim)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    let mut output = vec![0f32; dim * classes];

    let total = (config.epochs * examples.len()) as f64;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut scratch = Scratch {
        hidden: vec![0.0; dim],
        grad_hidden: vec![0.0; dim],
        probs: vec![0.0; classes],
    };
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0f64;
        for &i in &order {
            let lr = (config.initial_lr as f64 * (1.0 - step as f64 / total)) as f32;
            let (ids, label) = &examples[i];
            loss_sum += sgd_step(&mut embeddings, &mut output, dim, classes, ids, *label, lr, &mut scratch) as f64;
            step += 1;
        }
        log.epoch_loss.push(loss_sum / examples.len() as f64);
    }

    let model = LinearModel::from_parts(featurizer, labels, dim, embeddings, output)
        .expect("shapes are consistent by construction");
    Ok((model, log))
}
