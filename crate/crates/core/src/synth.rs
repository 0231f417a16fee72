//! Toy languages for desk-scale experiments.
//!
//! Each language writes in one of four Indic scripts using a syllable
//! alphabet (consonant plus optional vowel sign) and its own character
//! weights and lexicon. Sibling languages share a script and part of their
//! lexicon. A single romanization table maps every script onto the same
//! Latin syllables, so romanized siblings and cousins compete in one space.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DeterministicRomanizer, SourcedCorpus};
use crate::features::fnv1a64;
use crate::label::{ExampleId, LabeledExample, LanguageClass, LanguageCode, Registry};
use crate::script::ScriptCode;

const DEVA: (&str, &str, &str) = (
    "Deva",
    "कखगघचछजझटठडढतथदधनपबम",
    "\u{093E}\u{093F}\u{0941}\u{0947}\u{094B}",
);
const BENG: (&str, &str, &str) = (
    "Beng",
    "কখগঘচছজঝটঠডঢতথদধনপবম",
    "\u{09BE}\u{09BF}\u{09C1}\u{09C7}\u{09C8}",
);
const TAML: (&str, &str, &str) = (
    "Taml",
    "கஙசஜஞடணதநனபமயரறலளழவஸ",
    "\u{0BBE}\u{0BBF}\u{0BC1}\u{0BC6}\u{0BC8}",
);
const TELU: (&str, &str, &str) = (
    "Telu",
    "కఖగఘచఛజఝటఠడఢతథదధనపబమ",
    "\u{0C3E}\u{0C3F}\u{0C41}\u{0C46}\u{0C4A}",
);
const SCRIPTS: [(&str, &str, &str); 4] = [DEVA, BENG, TAML, TELU];

const CONSONANTS_LATN: [&str; 20] = [
    "ka", "kha", "ga", "gha", "cha", "ja", "jha", "ta", "tha", "da", "dha", "na", "pa", "pha", "ba", "bha", "ma",
    "ya", "ra", "la",
];
const VOWEL_SIGNS_LATN: [&str; 5] = ["aa", "i", "u", "e", "o"];

pub const MAX_SCRIPTS: usize = SCRIPTS.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub scripts: usize,
    pub languages_per_script: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub lexicon_size: usize,
    /// Share of a language's lexicon borrowed from its script sibling.
    pub shared_lexicon: f64,
    /// Per-word chance of using a sibling's word inside a sentence.
    pub code_mix: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            scripts: 4,
            languages_per_script: 2,
            train_per_class: 2000,
            test_per_class: 400,
            min_words: 1,
            max_words: 12,
            lexicon_size: 400,
            shared_lexicon: 0.25,
            code_mix: 0.05,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.scripts == 0 || self.scripts > MAX_SCRIPTS {
            return Err(format!("scripts must be in 1..={MAX_SCRIPTS}"));
        }
        if self.languages_per_script == 0 || self.languages_per_script > 26 {
            return Err("languages_per_script must be in 1..=26".into());
        }
        if self.min_words == 0 || self.max_words < self.min_words {
            return Err("need 1 <= min_words <= max_words".into());
        }
        if self.lexicon_size < 2 {
            return Err("lexicon_size must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.shared_lexicon) || !(0.0..=1.0).contains(&self.code_mix) {
            return Err("shared_lexicon and code_mix must be in [0, 1]".into());
        }
        Ok(())
    }
}

struct ToyLanguage {
    class: LanguageClass,
    lexicon: Vec<String>,
    zipf: WeightedIndex<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    /// Native classes, then their `Latn` twins, then `other`.
    pub registry: Registry,
    pub romanizer: DeterministicRomanizer,
    pub native_train: SourcedCorpus,
    pub native_test: SourcedCorpus,
}

impl ToyCorpus {
    pub fn native_classes(&self) -> Vec<LanguageClass> {
        self.registry
            .classes()
            .iter()
            .filter(|c| c.script().is_some_and(|s| s != ScriptCode::LATN))
            .copied()
            .collect()
    }

    pub fn roman_classes(&self) -> Vec<LanguageClass> {
        self.registry
            .classes()
            .iter()
            .filter(|c| c.script() == Some(ScriptCode::LATN))
            .copied()
            .collect()
    }
}

/// Romanization table shared by all toy scripts.
pub fn toy_romanizer(scripts: usize) -> DeterministicRomanizer {
    SCRIPTS[..scripts].iter().fold(DeterministicRomanizer::new(), |acc, (code, cons, vowels)| {
        let entries = cons
            .chars()
            .zip(CONSONANTS_LATN)
            .chain(vowels.chars().zip(VOWEL_SIGNS_LATN));
        acc.with_table(ScriptCode::parse(code).expect("valid script code"), entries)
            .expect("toy table is injective")
    })
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> WeightedIndex<f64> {
    let w: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * spread).exp()).collect();
    WeightedIndex::new(w).expect("positive weights")
}

fn make_word(rng: &mut ChaCha8Rng, cons: &[char], vowels: &[char], cw: &WeightedIndex<f64>, vw: &WeightedIndex<f64>) -> String {
    let syllables = rng.random_range(1..=4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(cons[cw.sample(rng)]);
        if rng.random_bool(0.7) {
            w.push(vowels[vw.sample(rng)]);
        }
    }
    w
}

fn languages(config: &ToyConfig, rng: &mut ChaCha8Rng) -> Vec<ToyLanguage> {
    let mut out = Vec::new();
    let mut index = 0u8;
    for (code, cons, vowels) in &SCRIPTS[..config.scripts] {
        let cons: Vec<char> = cons.chars().collect();
        let vowels: Vec<char> = vowels.chars().collect();
        let script = ScriptCode::parse(code).expect("valid script code");
        let mut lexicons: Vec<Vec<String>> = Vec::new();
        for _ in 0..config.languages_per_script {
            let cw = random_weights(rng, cons.len(), 3.0);
            let vw = random_weights(rng, vowels.len(), 2.0);
            let mut words = std::collections::BTreeSet::new();
            let mut lexicon = Vec::with_capacity(config.lexicon_size);
            while lexicon.len() < config.lexicon_size {
                let w = make_word(rng, &cons, &vowels, &cw, &vw);
                if words.insert(w.clone()) {
                    lexicon.push(w);
                }
            }
            lexicons.push(lexicon);
        }
        let borrowed = (config.shared_lexicon * config.lexicon_size as f64).round() as usize;
        for i in 1..lexicons.len() {
            let (head, tail) = lexicons.split_at_mut(i);
            let donor = &head[i - 1];
            for slot in 0..borrowed {
                let pick = rng.random_range(0..donor.len());
                tail[0][config.lexicon_size - 1 - slot] = donor[pick].clone();
            }
        }
        for lexicon in lexicons {
            let code = format!("q{}{}", (b'a' + index / 26) as char, (b'a' + index % 26) as char);
            index += 1;
            let zipf = WeightedIndex::new((1..=lexicon.len()).map(|r| 1.0 / r as f64)).expect("positive weights");
            out.push(ToyLanguage {
                class: LanguageClass::new(LanguageCode::new(&code).expect("valid code"), script),
                lexicon,
                zipf,
            });
        }
    }
    out
}

fn sentence(rng: &mut ChaCha8Rng, lang: &ToyLanguage, sibling: Option<&ToyLanguage>, config: &ToyConfig) -> String {
    let n = rng.random_range(config.min_words..=config.max_words);
    let words: Vec<&str> = (0..n)
        .map(|_| {
            let source = match sibling {
                Some(s) if rng.random_bool(config.code_mix) => s,
                _ => lang,
            };
            source.lexicon[source.zipf.sample(rng)].as_str()
        })
        .collect();
    words.join(" ")
}

/// Generates the toy registry, romanizer and native train/test splits.
pub fn generate(config: &ToyConfig) -> Result<ToyCorpus, String> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let langs = languages(config, &mut rng);
    let per_script = config.languages_per_script;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, lang) in langs.iter().enumerate() {
        let group = i / per_script * per_script;
        let sibling = (per_script > 1).then(|| &langs[group + (i - group + 1) % per_script]);
        for (split, n, out) in [("train", config.train_per_class, &mut train), ("test", config.test_per_class, &mut test)] {
            for j in 0..n {
                let text = sentence(&mut rng, lang, sibling, config);
                let id = ExampleId(fnv1a64(format!("toy\0{split}\0{}\0{j}", lang.class).as_bytes()));
                out.push(LabeledExample::new(id, text, lang.class, format!("toy-{split}")));
            }
        }
    }
    let native: Vec<LanguageClass> = langs.iter().map(|l| l.class).collect();
    let roman = native.iter().map(|c| c.with_script(ScriptCode::LATN));
    let registry = Registry::from_classes(native.iter().copied().chain(roman).chain([LanguageClass::Other]))
        .map_err(|e| e.to_string())?;
    Ok(ToyCorpus {
        registry,
        romanizer: toy_romanizer(config.scripts),
        native_train: SourcedCorpus::from_records(train),
        native_test: SourcedCorpus::from_records(test),
    })
}
