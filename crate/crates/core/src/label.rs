//! Language/script labels, the class registry, and the records every other
//! module passes around.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::script::ScriptCode;

/// Tag of the single scriptless catch-all class.
pub const OTHER_TAG: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed language tag `{tag}`: expected `lll_Ssss` or `other`")]
pub struct TagError {
    pub tag: String,
}

/// Three-letter lowercase ISO-639-3 code.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageCode([u8; 3]);

impl LanguageCode {
    pub fn new(code: &str) -> Option<Self> {
        let bytes: [u8; 3] = code.as_bytes().try_into().ok()?;
        bytes
            .iter()
            .all(u8::is_ascii_lowercase)
            .then_some(LanguageCode(bytes))
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII lowercase bytes are ever stored.
        std::str::from_utf8(&self.0).expect("ascii language code")
    }
}

impl fmt::Debug for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A (language, script) output class, or the catch-all `other`.
///
/// The wire form is `lll_Ssss`, e.g. `asm_Beng`, `asm_Latn`, `eng_Latn`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageClass {
    Tagged {
        language: LanguageCode,
        script: ScriptCode,
    },
    Other,
}

impl LanguageClass {
    pub fn new(language: LanguageCode, script: ScriptCode) -> Self {
        LanguageClass::Tagged { language, script }
    }

    pub fn language(&self) -> Option<LanguageCode> {
        match self {
            LanguageClass::Tagged { language, .. } => Some(*language),
            LanguageClass::Other => None,
        }
    }

    pub fn script(&self) -> Option<ScriptCode> {
        match self {
            LanguageClass::Tagged { script, .. } => Some(*script),
            LanguageClass::Other => None,
        }
    }

    pub fn is_other(&self) -> bool {
        matches!(self, LanguageClass::Other)
    }

    /// Same language, different script. `other` has no script and is returned unchanged.
    pub fn with_script(&self, script: ScriptCode) -> Self {
        match self {
            LanguageClass::Tagged { language, .. } => LanguageClass::Tagged {
                language: *language,
                script,
            },
            LanguageClass::Other => LanguageClass::Other,
        }
    }

    pub fn tag(&self) -> String {
        self.to_string()
    }
}

/// Parses `lll_Ssss` or `other`.
pub fn parse_tag(tag: &str) -> Result<LanguageClass, TagError> {
    let err = || TagError {
        tag: tag.to_string(),
    };
    if tag == OTHER_TAG {
        return Ok(LanguageClass::Other);
    }
    let (language, script) = tag.split_once('_').ok_or_else(err)?;
    let language = LanguageCode::new(language).ok_or_else(err)?;
    let script = ScriptCode::parse(script).ok_or_else(err)?;
    Ok(LanguageClass::Tagged { language, script })
}

impl FromStr for LanguageClass {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tag(s)
    }
}

impl fmt::Display for LanguageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageClass::Tagged { language, script } => write!(f, "{language}_{script}"),
            LanguageClass::Other => f.write_str(OTHER_TAG),
        }
    }
}

impl fmt::Debug for LanguageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for LanguageClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguageClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        parse_tag(&tag).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry is empty")]
    Empty,
    #[error("duplicate tag `{tag}` on line {line}")]
    Duplicate { tag: String, line: usize },
    #[error("line {line}: {source}")]
    Tag { line: usize, source: TagError },
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Ordered class inventory. Position in the registry is the output column
/// index used by every model trained against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    classes: Vec<LanguageClass>,
    index: HashMap<LanguageClass, usize>,
}

impl Registry {
    pub fn from_classes<I>(classes: I) -> Result<Self, RegistryError>
    where
        I: IntoIterator<Item = LanguageClass>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for (i, class) in classes.into_iter().enumerate() {
            if index.insert(class, out.len()).is_some() {
                return Err(RegistryError::Duplicate {
                    tag: class.tag(),
                    line: i + 1,
                });
            }
            out.push(class);
        }
        if out.is_empty() {
            return Err(RegistryError::Empty);
        }
        Ok(Registry {
            classes: out,
            index,
        })
    }

    /// Parses the registry file format: one tag per line, `#` starts a
    /// comment, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut classes = Vec::new();
        let mut index = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let class = parse_tag(line).map_err(|source| RegistryError::Tag {
                line: i + 1,
                source,
            })?;
            if index.insert(class, classes.len()).is_some() {
                return Err(RegistryError::Duplicate {
                    tag: line.to_string(),
                    line: i + 1,
                });
            }
            classes.push(class);
        }
        if classes.is_empty() {
            return Err(RegistryError::Empty);
        }
        Ok(Registry { classes, index })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn classes(&self) -> &[LanguageClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &LanguageClass) -> Option<usize> {
        self.index.get(class).copied()
    }

    pub fn contains(&self, class: &LanguageClass) -> bool {
        self.index.contains_key(class)
    }

    pub fn to_file_string(&self) -> String {
        self.classes.iter().map(|c| format!("{c}\n")).collect()
    }
}

/// Stable record identifier, printed as 16 hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleId(pub u64);

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Debug for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExampleId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(ExampleId)
    }
}

/// One corpus record: normalized text with its gold class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: ExampleId,
    pub text: String,
    pub label: LanguageClass,
    pub source: String,
    /// Record this one was derived from (oversampled copy, transliteration).
    pub parent: Option<ExampleId>,
}

impl LabeledExample {
    pub fn new(id: ExampleId, text: impl Into<String>, label: LanguageClass, source: impl Into<String>) -> Self {
        LabeledExample {
            id,
            text: text.into(),
            label,
            source: source.into(),
            parent: None,
        }
    }

    /// The original record this one ultimately descends from.
    pub fn origin(&self) -> ExampleId {
        self.parent.unwrap_or(self.id)
    }
}

/// Which part of the pipeline produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    NativeLinear,
    RomanLinear,
    Stage2,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::NativeLinear => "NativeLinear",
            Stage::RomanLinear => "RomanLinear",
            Stage::Stage2 => "Stage2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ranked class probabilities plus the stage that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Sorted by descending probability.
    pub ranked: Vec<(LanguageClass, f64)>,
    pub stage: Stage,
    /// Set when stage 2 was requested but unavailable and the stage-1
    /// prediction was returned instead.
    #[serde(default)]
    pub degraded: bool,
}

impl Prediction {
    pub fn new(ranked: Vec<(LanguageClass, f64)>, stage: Stage) -> Self {
        debug_assert!(!ranked.is_empty());
        Prediction {
            ranked,
            stage,
            degraded: false,
        }
    }

    pub fn top(&self) -> LanguageClass {
        self.ranked[0].0
    }

    pub fn top_probability(&self) -> f64 {
        self.ranked[0].1
    }

    /// Probability assigned to `class`, 0 when absent from the ranked list.
    pub fn probability_of(&self, class: &LanguageClass) -> f64 {
        self.ranked
            .iter()
            .find(|(c, _)| c == class)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.ranked.truncate(k.max(1));
        self
    }

    pub fn total_probability(&self) -> f64 {
        self.ranked.iter().map(|(_, p)| p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(tag: &str) -> LanguageClass {
        parse_tag(tag).unwrap()
    }

    #[test]
    fn parses_language_and_script() {
        let c = class("asm_Beng");
        assert_eq!(c.language().unwrap().as_str(), "asm");
        assert_eq!(c.script().unwrap().as_str(), "Beng");
        assert_eq!(c.to_string(), "asm_Beng");
    }

    #[test]
    fn other_is_the_scriptless_sentinel() {
        assert_eq!(class("other"), LanguageClass::Other);
        assert_eq!(LanguageClass::Other.script(), None);
        assert_eq!(class("eng_Latn").script().unwrap().as_str(), "Latn");
    }

    #[test]
    fn rejects_malformed_tags() {
        for bad in ["asm-Beng", "", "as_Beng", "asm_beng", "ASM_Beng", "asm_BENG", "asm_Beng_x", "Other"] {
            let err = parse_tag(bad).unwrap_err();
            assert_eq!(err.tag, bad);
            assert!(err.to_string().contains(bad));
        }
    }

    #[test]
    fn registry_keeps_file_order() {
        let reg = Registry::parse("aaa_Latn\nbbb_Latn\n").unwrap();
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.classes()[0], class("aaa_Latn"));
        assert_eq!(reg.index_of(&class("bbb_Latn")), Some(1));
    }

    #[test]
    fn registry_comments_and_blanks() {
        let reg = Registry::parse("# inventory\n\naaa_Latn  # first\nother\n").unwrap();
        assert_eq!(reg.classes(), &[class("aaa_Latn"), LanguageClass::Other]);
    }

    #[test]
    fn registry_rejects_duplicates_and_empty() {
        match Registry::parse("aaa_Latn\naaa_Latn\n") {
            Err(RegistryError::Duplicate { tag, line }) => {
                assert_eq!(tag, "aaa_Latn");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Registry::parse(""), Err(RegistryError::Empty)));
        assert!(matches!(Registry::parse("# nothing\n"), Err(RegistryError::Empty)));
    }

    #[test]
    fn forty_seven_class_inventory() {
        let text = include_str!("../../../docs/registry-47.txt");
        let reg = Registry::parse(text).unwrap();
        assert_eq!(reg.len(), 47);
        let native = reg
            .classes()
            .iter()
            .filter(|c| c.script().is_some_and(|s| s.as_str() != "Latn"))
            .count();
        let roman = reg
            .classes()
            .iter()
            .filter(|c| c.script().is_some_and(|s| s.as_str() == "Latn"))
            .count();
        // English is the one Latin-script class that is not a romanized Indic language.
        assert_eq!(native, 24);
        assert_eq!(roman, 22);
        assert!(reg.contains(&LanguageClass::Other));
        assert!(reg.contains(&class("eng_Latn")));
    }

    #[test]
    fn registry_loads_identically_twice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.txt");
        std::fs::write(&path, "ccc_Deva\naaa_Latn\nother\n").unwrap();
        let a = Registry::load(&path).unwrap();
        let b = Registry::load(&path).unwrap();
        assert_eq!(a, b);
        assert_eq!(Registry::parse(&a.to_file_string()).unwrap(), a);
    }

    #[test]
    fn prediction_accessors() {
        let p = Prediction::new(vec![(class("aaa_Latn"), 0.7), (class("bbb_Latn"), 0.3)], Stage::RomanLinear);
        assert_eq!(p.top(), class("aaa_Latn"));
        assert_eq!(p.probability_of(&class("bbb_Latn")), 0.3);
        assert_eq!(p.probability_of(&LanguageClass::Other), 0.0);
        assert_eq!(p.clone().truncated(1).ranked.len(), 1);
        assert_eq!(p.truncated(0).ranked.len(), 1);
    }

    #[test]
    fn example_id_hex_roundtrip() {
        let id = ExampleId(0xdead_beef);
        assert_eq!(id.to_string(), "00000000deadbeef");
        assert_eq!(id.to_string().parse::<ExampleId>().unwrap(), id);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn format_parse_identity(lang in "[a-z]{3}", s0 in "[A-Z]", srest in "[a-z]{3}") {
                let tag = format!("{lang}_{s0}{srest}");
                let c = parse_tag(&tag).unwrap();
                prop_assert_eq!(c.to_string(), tag);
                prop_assert_eq!(parse_tag(&c.to_string()).unwrap(), c);
            }
        }
    }
}
