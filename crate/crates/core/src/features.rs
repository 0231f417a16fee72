//! Text normalization, tokenization and hashed word / character n-gram
//! features shared by both classifier stages.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::script::ScriptCode;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub min_char_ngram: usize,
    pub max_char_ngram: usize,
    pub word_ngrams: usize,
    pub bucket_count: usize,
    pub word_vocab_limit: usize,
    pub lowercase_roman: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            min_char_ngram: 2,
            max_char_ngram: 4,
            word_ngrams: 1,
            bucket_count: 2_000_000,
            word_vocab_limit: 200_000,
            lowercase_roman: true,
        }
    }
}

impl FeaturizerConfig {
    /// Feature set of the high-capacity stage-2 reference model.
    pub fn wide() -> Self {
        FeaturizerConfig {
            min_char_ngram: 1,
            max_char_ngram: 5,
            word_ngrams: 2,
            bucket_count: 500_000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_char_ngram < 1 {
            return Err("min_char_ngram must be >= 1".into());
        }
        if self.max_char_ngram < self.min_char_ngram {
            return Err(format!(
                "max_char_ngram ({}) must be >= min_char_ngram ({})",
                self.max_char_ngram, self.min_char_ngram
            ));
        }
        if self.word_ngrams < 1 {
            return Err("word_ngrams must be >= 1".into());
        }
        if self.bucket_count == 0 {
            return Err("bucket_count must be > 0".into());
        }
        if self.word_vocab_limit == 0 {
            return Err("word_vocab_limit must be > 0".into());
        }
        if (self.bucket_count as u64).saturating_add(self.word_vocab_limit as u64) > u32::MAX as u64 {
            return Err("bucket_count + word_vocab_limit must fit in 32 bits".into());
        }
        Ok(())
    }
}

/// NFC, whitespace runs collapsed to one space, ends trimmed, and Latin
/// letters lowercased when `lowercase_roman` is set. Idempotent.
pub fn normalize(text: &str, config: &FeaturizerConfig) -> String {
    let lowered: String = if config.lowercase_roman {
        text.chars()
            .flat_map(|c| {
                let latin = ScriptCode::of_char(c) == ScriptCode::LATN;
                LowerIf::new(c, latin)
            })
            .collect()
    } else {
        text.to_string()
    };
    let composed: String = lowered.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

enum LowerIf {
    Lower(std::char::ToLowercase),
    Keep(Option<char>),
}

impl LowerIf {
    fn new(c: char, lower: bool) -> Self {
        if lower {
            LowerIf::Lower(c.to_lowercase())
        } else {
            LowerIf::Keep(Some(c))
        }
    }
}

impl Iterator for LowerIf {
    type Item = char;

    fn next(&mut self) -> Option<char> {
        match self {
            LowerIf::Lower(it) => it.next(),
            LowerIf::Keep(c) => c.take(),
        }
    }
}

/// Splits normalized text on single spaces.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(' ').filter(|t| !t.is_empty()).collect()
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// 64-bit FNV-1a of the UTF-8 bytes, reduced modulo `bucket_count`.
pub fn hash_ngram(ngram: &str, bucket_count: usize) -> usize {
    assert!(bucket_count > 0, "bucket_count must be > 0");
    (fnv1a64(ngram.as_bytes()) % bucket_count as u64) as usize
}

/// Word vocabulary; word ids are positions in this list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordVocab {
    words: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

impl WordVocab {
    /// Counts tokens of the (already normalized) texts, keeps words seen at
    /// least `min_count` times, most frequent first (ties by byte order),
    /// capped at `limit` entries.
    pub fn build<'a, I>(texts: I, min_count: u64, limit: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&'a str, u64> = HashMap::new();
        for text in texts {
            for word in tokenize(text) {
                *counts.entry(word).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts.into_iter().filter(|(_, n)| *n >= min_count.max(1)).collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries.truncate(limit);
        Self::from_entries(entries.into_iter().map(|(w, n)| (w.to_string(), n)))
    }

    pub fn from_entries<I: IntoIterator<Item = (String, u64)>>(entries: I) -> Self {
        let words: Vec<(String, u64)> = entries.into_iter().collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        WordVocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.words
    }
}

/// Feature ids: word ids in `[0, vocab)`, hashed n-grams in
/// `[vocab, vocab + bucket_count)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector {
    pub ids: Vec<u32>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    config: FeaturizerConfig,
    vocab: WordVocab,
}

impl Featurizer {
    pub fn new(config: FeaturizerConfig, vocab: WordVocab) -> Self {
        Featurizer { config, vocab }
    }

    pub fn config(&self) -> &FeaturizerConfig {
        &self.config
    }

    pub fn vocab(&self) -> &WordVocab {
        &self.vocab
    }

    /// Size of the feature id space.
    pub fn feature_count(&self) -> usize {
        self.vocab.len() + self.config.bucket_count
    }

    pub fn normalize(&self, text: &str) -> String {
        normalize(text, &self.config)
    }

    /// Features of already-normalized text, in order: in-vocabulary word
    /// ids, then the character n-grams of each word, then word n-grams of
    /// length 2..=word_ngrams.
    pub fn extract(&self, text: &str) -> FeatureVector {
        let words = tokenize(text);
        let offset = self.vocab.len();
        let buckets = self.config.bucket_count as u64;
        let bucket = |h: u64| (offset as u64 + h % buckets) as u32;
        let mut ids = Vec::with_capacity(words.len() * 12);

        ids.extend(words.iter().filter_map(|w| self.vocab.id(w)));
        let mut scratch = String::new();
        for word in &words {
            for_each_char_ngram(word, &self.config, &mut scratch, |g| ids.push(bucket(fnv1a64(g.as_bytes()))));
        }
        for_each_word_ngram(&words, self.config.word_ngrams, &mut scratch, |g| {
            ids.push(bucket(fnv1a64(g.as_bytes())))
        });
        FeatureVector { ids }
    }

    /// Normalizes, then extracts.
    pub fn featurize(&self, raw: &str) -> FeatureVector {
        self.extract(&self.normalize(raw))
    }

    /// The n-gram strings behind the hashed ids of [`Featurizer::extract`]
    /// (char n-grams then word n-grams), before hashing.
    pub fn ngram_strings(&self, text: &str) -> Vec<String> {
        let words = tokenize(text);
        let mut out = Vec::new();
        let mut scratch = String::new();
        for word in &words {
            for_each_char_ngram(word, &self.config, &mut scratch, |g| out.push(g.to_string()));
        }
        for_each_word_ngram(&words, self.config.word_ngrams, &mut scratch, |g| out.push(g.to_string()));
        out
    }
}

/// Char n-grams of `<word>` for every length in the configured range. A word
/// too short to yield any n-gram contributes its whole bracketed form, so
/// every word produces at least one feature.
fn for_each_char_ngram(word: &str, config: &FeaturizerConfig, scratch: &mut String, mut emit: impl FnMut(&str)) {
    scratch.clear();
    scratch.push('<');
    scratch.push_str(word);
    scratch.push('>');
    let bounds: Vec<usize> = scratch
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(scratch.len()))
        .collect();
    let nchars = bounds.len() - 1;
    if nchars < config.min_char_ngram {
        emit(scratch);
        return;
    }
    for n in config.min_char_ngram..=config.max_char_ngram.min(nchars) {
        for start in 0..=(nchars - n) {
            emit(&scratch[bounds[start]..bounds[start + n]]);
        }
    }
}

fn for_each_word_ngram(words: &[&str], max_n: usize, scratch: &mut String, mut emit: impl FnMut(&str)) {
    for n in 2..=max_n {
        for window in words.windows(n) {
            scratch.clear();
            for (i, w) in window.iter().enumerate() {
                if i > 0 {
                    scratch.push(' ');
                }
                scratch.push_str(w);
            }
            emit(scratch);
        }
    }
}
