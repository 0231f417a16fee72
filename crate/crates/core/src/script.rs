//! Unicode-script statistics and the native-vs-roman routing decision.
//!
//! Letters are characters whose general category is a letter (`L*`) or a
//! combining mark (`M*`). Marks carry their own Script property value, so
//! Devanagari vowel signs and viramas count as `Deva`. Characters whose
//! Script is Common, Inherited or Unknown are counted under `Zzzz`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_general_category::get_general_category;
use unicode_script::{Script, UnicodeScript};

/// Four-letter ISO-15924 script code in title case (`Latn`, `Deva`, ...).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScriptCode([u8; 4]);

impl ScriptCode {
    pub const LATN: ScriptCode = ScriptCode(*b"Latn");
    pub const ZZZZ: ScriptCode = ScriptCode(*b"Zzzz");

    pub fn parse(code: &str) -> Option<Self> {
        let bytes: [u8; 4] = code.as_bytes().try_into().ok()?;
        let ok = bytes[0].is_ascii_uppercase() && bytes[1..].iter().all(u8::is_ascii_lowercase);
        ok.then_some(ScriptCode(bytes))
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii script code")
    }

    /// Script of a single character, collapsing Common/Inherited/Unknown to `Zzzz`.
    pub fn of_char(c: char) -> Self {
        match c.script() {
            Script::Common | Script::Inherited | Script::Unknown => ScriptCode::ZZZZ,
            s => ScriptCode::parse(s.short_name()).unwrap_or(ScriptCode::ZZZZ),
        }
    }
}

impl fmt::Display for ScriptCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for ScriptCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ScriptCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ScriptCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ScriptCode::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad script code `{s}`")))
    }
}

/// Letters and combining marks are counted; digits, punctuation,
/// whitespace and symbols are not.
pub fn is_letter(c: char) -> bool {
    let cat = get_general_category(c).abbreviation().as_bytes()[0];
    cat == b'L' || cat == b'M'
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptHistogram {
    counts: BTreeMap<ScriptCode, usize>,
    total_letters: usize,
}

impl ScriptHistogram {
    pub fn from_counts<I: IntoIterator<Item = (ScriptCode, usize)>>(counts: I) -> Self {
        let mut hist = ScriptHistogram::default();
        for (script, n) in counts {
            if n > 0 {
                *hist.counts.entry(script).or_default() += n;
                hist.total_letters += n;
            }
        }
        hist
    }

    pub fn count(&self, script: ScriptCode) -> usize {
        self.counts.get(&script).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<ScriptCode, usize> {
        &self.counts
    }

    pub fn total_letters(&self) -> usize {
        self.total_letters
    }

    /// Script with the most letters; ties go to the smaller code.
    pub fn dominant(&self) -> Option<ScriptCode> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(s, _)| *s)
    }
}

pub fn script_histogram(text: &str) -> ScriptHistogram {
    let mut hist = ScriptHistogram::default();
    for c in text.chars().filter(|&c| is_letter(c)) {
        *hist.counts.entry(ScriptCode::of_char(c)).or_default() += 1;
        hist.total_letters += 1;
    }
    hist
}

/// Fraction of letters that are Latin; 0 for text without letters.
pub fn roman_ratio(hist: &ScriptHistogram) -> f64 {
    if hist.total_letters == 0 {
        return 0.0;
    }
    hist.count(ScriptCode::LATN) as f64 / hist.total_letters as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    NativePath,
    RomanPath,
}

/// Roman path iff strictly more than half of the letters are Latin.
pub fn route_for_ratio(ratio: f64) -> Route {
    if ratio > 0.5 {
        Route::RomanPath
    } else {
        Route::NativePath
    }
}

pub fn route(text: &str) -> Route {
    route_for_ratio(roman_ratio(&script_histogram(text)))
}
