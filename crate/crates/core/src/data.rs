//! Corpus ingestion, balanced sampling with oversampling, held-out dedup,
//! synthetic romanization and the review-flagging pass for test sets.
//!
//! Corpus line format (read and written): `__label__<tag>\t<text>`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::features::{fnv1a64, normalize, tokenize, FeaturizerConfig};
use crate::label::{parse_tag, ExampleId, LabeledExample, LanguageClass};
use crate::linear::LinearModel;
use crate::script::{is_letter, ScriptCode};

pub const LABEL_PREFIX: &str = "__label__";
pub const XLIT_SUFFIX: &str = ":xlit";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    InvalidLine { path: String, line: usize, message: String },
    #[error("class {0} has no records")]
    EmptyClass(LanguageClass),
    #[error("target per class must be >= 1")]
    InvalidTarget,
    #[error("no transliteration table for class {0}")]
    UnsupportedClass(LanguageClass),
    #[error("invalid transliteration table: {0}")]
    InvalidTable(String),
    #[error("duplicate record id {0}")]
    DuplicateId(ExampleId),
    #[error("{0}")]
    Mismatch(String),
}

/// Records plus per-source counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourcedCorpus {
    records: Vec<LabeledExample>,
    source_counts: BTreeMap<String, usize>,
}

impl SourcedCorpus {
    pub fn from_records(records: Vec<LabeledExample>) -> Self {
        let mut source_counts = BTreeMap::new();
        for r in &records {
            *source_counts.entry(r.source.clone()).or_default() += 1;
        }
        SourcedCorpus { records, source_counts }
    }

    pub fn records(&self) -> &[LabeledExample] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledExample> {
        self.records
    }

    pub fn source_counts(&self) -> &BTreeMap<String, usize> {
        &self.source_counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Classes in order of first appearance.
    pub fn classes(&self) -> Vec<LanguageClass> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.label))
            .map(|r| r.label)
            .collect()
    }

    pub fn class_counts(&self) -> BTreeMap<LanguageClass, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.label).or_default() += 1;
        }
        out
    }

    pub fn extend(&mut self, other: SourcedCorpus) {
        for (s, n) in other.source_counts {
            *self.source_counts.entry(s).or_default() += n;
        }
        self.records.extend(other.records);
    }

    /// Writes `__label__<tag>\t<text>` lines.
    pub fn write_labeled<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(w, "{LABEL_PREFIX}{}\t{}", r.label, r.text)?;
        }
        w.flush()
    }
}

/// Splits a `__label__<tag>\t<text>` line.
pub fn parse_labeled_line(line: &str) -> Result<(LanguageClass, &str), String> {
    let rest = line
        .strip_prefix(LABEL_PREFIX)
        .ok_or_else(|| format!("line does not start with `{LABEL_PREFIX}`"))?;
    let (tag, text) = rest.split_once('\t').ok_or("missing tab after label")?;
    let class = parse_tag(tag).map_err(|e| e.to_string())?;
    Ok((class, text))
}

/// One input file. Without a label, lines must use the labeled-line format.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub source: String,
    pub label: Option<LanguageClass>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: usize,
    pub blank: usize,
    pub invalid_utf8: usize,
}

pub fn record_id(source: &str, path: &Path, line: usize) -> ExampleId {
    ExampleId(fnv1a64(format!("{source}\0{}\0{line}", path.display()).as_bytes()))
}

/// Reads each file, normalizes its lines and assigns ids from
/// (source, path, line number). Blank lines are dropped; lines that are not
/// valid UTF-8 are skipped and counted.
pub fn ingest(specs: &[IngestSpec], config: &FeaturizerConfig) -> Result<(SourcedCorpus, IngestStats), DataError> {
    let mut records = Vec::new();
    let mut stats = IngestStats::default();
    let mut ids = HashSet::new();
    for spec in specs {
        let path_str = spec.path.display().to_string();
        let bytes = std::fs::read(&spec.path).map_err(|source| DataError::Io {
            path: path_str.clone(),
            source,
        })?;
        let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
        let lines = if body.is_empty() { Vec::new() } else { body.split(|&b| b == b'\n').collect() };
        for (i, raw) in lines.into_iter().enumerate() {
            let line_no = i + 1;
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            stats.lines += 1;
            let Ok(line) = std::str::from_utf8(raw) else {
                stats.invalid_utf8 += 1;
                continue;
            };
            let (label, text) = match spec.label {
                Some(label) => (label, line),
                None if line.trim().is_empty() => {
                    stats.blank += 1;
                    continue;
                }
                None => parse_labeled_line(line).map_err(|message| DataError::InvalidLine {
                    path: path_str.clone(),
                    line: line_no,
                    message,
                })?,
            };
            let text = normalize(text, config);
            if text.is_empty() {
                stats.blank += 1;
                continue;
            }
            let id = record_id(&spec.source, &spec.path, line_no);
            if !ids.insert(id) {
                return Err(DataError::DuplicateId(id));
            }
            records.push(LabeledExample::new(id, text, label, spec.source.clone()));
        }
    }
    Ok((SourcedCorpus::from_records(records), stats))
}

/// Reads a labeled-line corpus under a single source tag.
pub fn read_labeled(path: impl AsRef<Path>, source: &str, config: &FeaturizerConfig) -> Result<SourcedCorpus, DataError> {
    let spec = IngestSpec {
        path: path.as_ref().to_path_buf(),
        source: source.to_string(),
        label: None,
    };
    Ok(ingest(&[spec], config)?.0)
}

fn copy_id(original: ExampleId, copy: usize) -> ExampleId {
    ExampleId(fnv1a64(format!("{original}\0copy\0{copy}").as_bytes()))
}

/// Exactly `target` records for each class in `classes`.
///
/// Classes with at least `target` records are sampled without replacement,
/// with per-source quotas proportional to source size (largest remainder).
/// Smaller classes are oversampled: every record appears `target / n` or
/// `target / n + 1` times, the extra copies going to a seeded random subset.
/// Copies get derived ids and point at the original through `parent`.
pub fn balance_sample(
    corpus: &SourcedCorpus,
    classes: &[LanguageClass],
    target: usize,
    seed: u64,
) -> Result<SourcedCorpus, DataError> {
    if target == 0 {
        return Err(DataError::InvalidTarget);
    }
    let mut by_class: HashMap<LanguageClass, Vec<usize>> = HashMap::new();
    for (i, r) in corpus.records.iter().enumerate() {
        by_class.entry(r.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target * classes.len());
    for class in classes {
        let members = by_class.get(class).filter(|m| !m.is_empty()).ok_or(DataError::EmptyClass(*class))?;
        let n = members.len();
        if n >= target {
            let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for &i in members {
                by_source.entry(&corpus.records[i].source).or_default().push(i);
            }
            let quotas = largest_remainder(by_source.values().map(Vec::len).collect(), target);
            let mut chosen: Vec<usize> = Vec::with_capacity(target);
            for (pool, quota) in by_source.values().zip(quotas) {
                chosen.extend(index::sample(&mut rng, pool.len(), quota).into_iter().map(|j| pool[j]));
            }
            chosen.sort_unstable();
            out.extend(chosen.into_iter().map(|i| corpus.records[i].clone()));
        } else {
            let base = target / n;
            let extra: HashSet<usize> = index::sample(&mut rng, n, target % n).into_iter().collect();
            for (j, &i) in members.iter().enumerate() {
                let record = &corpus.records[i];
                let copies = base + usize::from(extra.contains(&j));
                out.push(record.clone());
                for c in 1..copies {
                    let mut dup = record.clone();
                    dup.id = copy_id(record.id, c);
                    dup.parent = Some(record.id);
                    out.push(dup);
                }
            }
        }
    }
    Ok(SourcedCorpus::from_records(out))
}

/// Splits `total` across buckets proportionally to `sizes`.
fn largest_remainder(sizes: Vec<usize>, total: usize) -> Vec<usize> {
    let n: u128 = sizes.iter().map(|&s| s as u128).sum();
    let mut quotas: Vec<usize> = Vec::with_capacity(sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    for (i, &s) in sizes.iter().enumerate() {
        let exact = total as u128 * s as u128;
        quotas.push((exact / n) as usize);
        remainders.push((exact % n, i));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Drops training records whose normalized text occurs in any held-out
/// corpus. Returns the filtered corpus and the number removed.
pub fn dedup_against(
    corpus: &SourcedCorpus,
    heldout: &[&SourcedCorpus],
    config: &FeaturizerConfig,
) -> (SourcedCorpus, usize) {
    let banned: HashSet<String> = heldout
        .iter()
        .flat_map(|h| h.records.iter())
        .map(|r| normalize(&r.text, config))
        .collect();
    let kept: Vec<LabeledExample> = corpus
        .records
        .iter()
        .filter(|r| !banned.contains(&normalize(&r.text, config)))
        .cloned()
        .collect();
    let removed = corpus.len() - kept.len();
    (SourcedCorpus::from_records(kept), removed)
}

/// Native-script to Latin-script conversion.
pub trait Transliterator: Send + Sync {
    fn supports(&self, class: &LanguageClass) -> bool;

    /// Output holds only Latin letters, single spaces and apostrophes.
    fn romanize(&self, text: &str, class: &LanguageClass) -> Result<String, DataError>;
}

/// Character-to-Latin-string tables keyed by script.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeterministicRomanizer {
    tables: BTreeMap<ScriptCode, HashMap<char, String>>,
    excluded: BTreeSet<LanguageClass>,
}

fn is_roman_output(s: &str) -> bool {
    s.chars()
        .all(|c| c == '\'' || (is_letter(c) && ScriptCode::of_char(c) == ScriptCode::LATN))
}

impl DeterministicRomanizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or replaces) the table for `script`. Values must be non-empty
    /// Latin strings and pairwise distinct.
    pub fn with_table<I, S>(mut self, script: ScriptCode, entries: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (char, S)>,
        S: Into<String>,
    {
        let mut table = HashMap::new();
        let mut values = HashSet::new();
        for (c, latin) in entries {
            let latin: String = latin.into();
            if latin.is_empty() || !is_roman_output(&latin) {
                return Err(DataError::InvalidTable(format!("`{c}` maps to non-Latin `{latin}`")));
            }
            if !values.insert(latin.clone()) {
                return Err(DataError::InvalidTable(format!("`{latin}` is used twice in the {script} table")));
            }
            if table.insert(c, latin).is_some() {
                return Err(DataError::InvalidTable(format!("`{c}` has two entries in the {script} table")));
            }
        }
        self.tables.insert(script, table);
        Ok(self)
    }

    /// Marks a class as unsupported even though its script has a table.
    pub fn exclude(mut self, class: LanguageClass) -> Self {
        self.excluded.insert(class);
        self
    }

    pub fn scripts(&self) -> impl Iterator<Item = &ScriptCode> {
        self.tables.keys()
    }

    /// Parses the table file format: `<Script>\t<char>\t<latin>` per line,
    /// `exclude\t<tag>` to drop a class, `#` comments.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut entries: BTreeMap<ScriptCode, Vec<(char, String)>> = BTreeMap::new();
        let mut excluded = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |m: &str| DataError::InvalidTable(format!("line {}: {m}", i + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["exclude", tag] => excluded.push(parse_tag(tag).map_err(|e| bad(&e.to_string()))?),
                [script, ch, latin] => {
                    let script = ScriptCode::parse(script).ok_or_else(|| bad("bad script code"))?;
                    let mut chars = ch.chars();
                    let c = match (chars.next(), chars.next()) {
                        (Some(c), None) => c,
                        _ => return Err(bad("expected a single character")),
                    };
                    entries.entry(script).or_default().push((c, latin.to_string()));
                }
                _ => return Err(bad("expected `<Script>\\t<char>\\t<latin>`")),
            }
        }
        let mut out = DeterministicRomanizer::new();
        for (script, table) in entries {
            out = out.with_table(script, table)?;
        }
        Ok(excluded.into_iter().fold(out, DeterministicRomanizer::exclude))
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (script, table) in &self.tables {
            let mut rows: Vec<_> = table.iter().collect();
            rows.sort();
            for (c, latin) in rows {
                s.push_str(&format!("{script}\t{c}\t{latin}\n"));
            }
        }
        for class in &self.excluded {
            s.push_str(&format!("exclude\t{class}\n"));
        }
        s
    }
}

impl Transliterator for DeterministicRomanizer {
    fn supports(&self, class: &LanguageClass) -> bool {
        class
            .script()
            .is_some_and(|s| self.tables.contains_key(&s) && !self.excluded.contains(class))
    }

    fn romanize(&self, text: &str, class: &LanguageClass) -> Result<String, DataError> {
        if !self.supports(class) {
            return Err(DataError::UnsupportedClass(*class));
        }
        let table = &self.tables[&class.script().expect("supported classes have a script")];
        let mut out = String::with_capacity(text.len() * 2);
        for c in text.chars() {
            if let Some(latin) = table.get(&c) {
                out.push_str(latin);
            } else if c.is_whitespace() {
                out.push(' ');
            } else if c == '\'' || (is_letter(c) && ScriptCode::of_char(c) == ScriptCode::LATN) {
                out.extend(c.to_lowercase());
            }
        }
        Ok(tokenize(&out).join(" "))
    }
}

/// Wraps a transliterator and applies random character edits (substitute,
/// delete or insert a letter) at `rate` per output letter. Deterministic per
/// (seed, input text).
#[derive(Debug, Clone)]
pub struct NoisyTransliterator<T> {
    inner: T,
    rate: f64,
    seed: u64,
}

impl<T: Transliterator> NoisyTransliterator<T> {
    pub fn new(inner: T, rate: f64, seed: u64) -> Self {
        NoisyTransliterator {
            inner,
            rate: rate.clamp(0.0, 1.0),
            seed,
        }
    }
}

impl<T: Transliterator> Transliterator for NoisyTransliterator<T> {
    fn supports(&self, class: &LanguageClass) -> bool {
        self.inner.supports(class)
    }

    fn romanize(&self, text: &str, class: &LanguageClass) -> Result<String, DataError> {
        let clean = self.inner.romanize(text, class)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(text.as_bytes()));
        Ok(perturb(&clean, self.rate, &mut rng))
    }
}

/// Character-level edits on the letters of `text`.
pub fn perturb(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let letter = |rng: &mut dyn rand::RngCore| (b'a' + rng.random_range(0..26u8)) as char;
    let mut out = String::with_capacity(text.len() + 4);
    for c in text.chars() {
        if c == ' ' || !rng.random_bool(rate) {
            out.push(c);
            continue;
        }
        match rng.random_range(0..3u8) {
            0 => out.push(letter(rng)),
            1 => {}
            _ => {
                out.push(c);
                out.push(letter(rng));
            }
        }
    }
    tokenize(&out).join(" ")
}

/// Romanizes every record: script becomes `Latn`, source gets `:xlit`, the
/// new record points at its native parent. Order is preserved.
pub fn romanize_corpus(corpus: &SourcedCorpus, transliterator: &dyn Transliterator) -> Result<SourcedCorpus, DataError> {
    if let Some(r) = corpus.records.iter().find(|r| !transliterator.supports(&r.label)) {
        return Err(DataError::UnsupportedClass(r.label));
    }
    let records: Result<Vec<LabeledExample>, DataError> = corpus
        .records
        .par_iter()
        .map(|r| {
            let text = transliterator.romanize(&r.text, &r.label)?;
            Ok(LabeledExample {
                id: ExampleId(fnv1a64(format!("{}{XLIT_SUFFIX}", r.id).as_bytes())),
                text,
                label: r.label.with_script(ScriptCode::LATN),
                source: format!("{}{XLIT_SUFFIX}", r.source),
                parent: Some(r.id),
            })
        })
        .collect();
    Ok(SourcedCorpus::from_records(records?))
}

/// Parallel native/roman pair awaiting review.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewItem {
    pub id: ExampleId,
    /// Gold native-script class.
    pub label: LanguageClass,
    pub native_text: String,
    pub roman_text: String,
}

/// Reads `__label__<native tag>\t<native text>\t<roman text>` lines; ids are
/// 1-based line numbers.
pub fn read_review_items(path: impl AsRef<Path>) -> Result<Vec<ReviewItem>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| DataError::InvalidLine {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let (label, rest) = parse_labeled_line(line).map_err(invalid)?;
        let (native, roman) = rest
            .split_once('\t')
            .ok_or_else(|| invalid("expected native and roman text separated by a tab".into()))?;
        out.push(ReviewItem {
            id: ExampleId((i + 1) as u64),
            label,
            native_text: native.to_string(),
            roman_text: roman.to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlagReason {
    TooShort,
    LowConfidence,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewRow {
    pub id: ExampleId,
    /// `None` means kept.
    pub reason: Option<FlagReason>,
    pub word_count: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlagReport {
    pub rows: Vec<ReviewRow>,
}

impl FlagReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ReviewRow> {
        self.rows.iter().filter(|r| r.reason.is_some())
    }

    pub fn kept(&self) -> impl Iterator<Item = &ReviewRow> {
        self.rows.iter().filter(|r| r.reason.is_none())
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.flagged().count() as f64 / self.rows.len() as f64
    }

    /// `id\treason\tword_count\tconfidence`, one row per item; kept items
    /// carry reason `Kept`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "id\treason\tword_count\tconfidence")?;
        for r in &self.rows {
            let reason = match r.reason {
                Some(FlagReason::TooShort) => "TooShort",
                Some(FlagReason::LowConfidence) => "LowConfidence",
                Some(FlagReason::Both) => "Both",
                None => "Kept",
            };
            writeln!(w, "{}\t{reason}\t{}\t{:.6}", r.id, r.word_count, r.confidence)?;
        }
        w.flush()
    }
}

/// Flags pairs whose romanized side has fewer than `min_words` words or
/// whose native side gets gold-class probability below `min_conf` from the
/// native model.
pub fn flag_for_review(items: &[ReviewItem], native_model: &LinearModel, min_words: usize, min_conf: f64) -> FlagReport {
    let config = FeaturizerConfig::default();
    let rows = items
        .par_iter()
        .map(|item| {
            let word_count = tokenize(&normalize(&item.roman_text, &config)).len();
            let confidence = native_model.probability_of(&item.native_text, &item.label);
            let reason = match (word_count < min_words, confidence < min_conf) {
                (true, true) => Some(FlagReason::Both),
                (true, false) => Some(FlagReason::TooShort),
                (false, true) => Some(FlagReason::LowConfidence),
                (false, false) => None,
            };
            ReviewRow {
                id: item.id,
                reason,
                word_count,
                confidence,
            }
        })
        .collect();
    FlagReport { rows }
}
