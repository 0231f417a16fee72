//! Flat `key = value` pipeline configuration.
//!
//! Keys: `registry`, `native_model`, `roman_model`, `stage2`
//! (`local:<model path>` or `remote:<base url>`), `threshold`, `seed`,
//! `timeout_ms`, `max_batch`, `retries`, and the featurizer keys
//! `min_char_ngram`, `max_char_ngram`, `word_ngrams`, `bucket_count`,
//! `word_vocab_limit`, `lowercase_roman`. Relative paths resolve against the
//! directory holding the file. `#` starts a comment line.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use lidkit::ensemble::DEFAULT_THRESHOLD;
use lidkit::features::FeaturizerConfig;
use lidkit::stage2::RemoteEndpointConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Stage2Spec {
    Local(PathBuf),
    Remote(String),
}

impl Stage2Spec {
    pub fn parse(value: &str, base: &Path) -> Result<Self, String> {
        if let Some(path) = value.strip_prefix("local:") {
            Ok(Stage2Spec::Local(base.join(path)))
        } else if let Some(url) = value.strip_prefix("remote:") {
            Ok(Stage2Spec::Remote(url.to_string()))
        } else {
            Err(format!("stage2 must be `local:<path>` or `remote:<url>`, got `{value}`"))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeaturizerOverrides {
    pub min_char_ngram: Option<usize>,
    pub max_char_ngram: Option<usize>,
    pub word_ngrams: Option<usize>,
    pub bucket_count: Option<usize>,
    pub word_vocab_limit: Option<usize>,
    pub lowercase_roman: Option<bool>,
}

impl FeaturizerOverrides {
    pub fn apply(&self, mut base: FeaturizerConfig) -> FeaturizerConfig {
        if let Some(v) = self.min_char_ngram {
            base.min_char_ngram = v;
        }
        if let Some(v) = self.max_char_ngram {
            base.max_char_ngram = v;
        }
        if let Some(v) = self.word_ngrams {
            base.word_ngrams = v;
        }
        if let Some(v) = self.bucket_count {
            base.bucket_count = v;
        }
        if let Some(v) = self.word_vocab_limit {
            base.word_vocab_limit = v;
        }
        if let Some(v) = self.lowercase_roman {
            base.lowercase_roman = v;
        }
        base
    }

    /// Values set in `other` win.
    pub fn merge(&self, other: &FeaturizerOverrides) -> FeaturizerOverrides {
        FeaturizerOverrides {
            min_char_ngram: other.min_char_ngram.or(self.min_char_ngram),
            max_char_ngram: other.max_char_ngram.or(self.max_char_ngram),
            word_ngrams: other.word_ngrams.or(self.word_ngrams),
            bucket_count: other.bucket_count.or(self.bucket_count),
            word_vocab_limit: other.word_vocab_limit.or(self.word_vocab_limit),
            lowercase_roman: other.lowercase_roman.or(self.lowercase_roman),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub registry: Option<PathBuf>,
    pub native_model: Option<PathBuf>,
    pub roman_model: Option<PathBuf>,
    pub stage2: Option<Stage2Spec>,
    pub threshold: f64,
    pub seed: u64,
    pub timeout_ms: u64,
    pub max_batch: usize,
    pub retries: usize,
    pub featurizer: FeaturizerOverrides,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let remote = RemoteEndpointConfig::new("");
        PipelineConfig {
            registry: None,
            native_model: None,
            roman_model: None,
            stage2: None,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            timeout_ms: remote.timeout.as_millis() as u64,
            max_batch: remote.max_batch,
            retries: remote.retries,
            featurizer: FeaturizerOverrides::default(),
        }
    }
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{key}` expects a number, got `{value}`"))
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let at = |e: String| format!("line {}: {e}", i + 1);
            match key {
                "registry" => cfg.registry = Some(base.join(value)),
                "native_model" => cfg.native_model = Some(base.join(value)),
                "roman_model" => cfg.roman_model = Some(base.join(value)),
                "stage2" => cfg.stage2 = Some(Stage2Spec::parse(value, base).map_err(at)?),
                "threshold" => cfg.threshold = number(key, value).map_err(at)?,
                "seed" => cfg.seed = number(key, value).map_err(at)?,
                "timeout_ms" => cfg.timeout_ms = number(key, value).map_err(at)?,
                "max_batch" => cfg.max_batch = number(key, value).map_err(at)?,
                "retries" => cfg.retries = number(key, value).map_err(at)?,
                "min_char_ngram" => cfg.featurizer.min_char_ngram = Some(number(key, value).map_err(at)?),
                "max_char_ngram" => cfg.featurizer.max_char_ngram = Some(number(key, value).map_err(at)?),
                "word_ngrams" => cfg.featurizer.word_ngrams = Some(number(key, value).map_err(at)?),
                "bucket_count" => cfg.featurizer.bucket_count = Some(number(key, value).map_err(at)?),
                "word_vocab_limit" => cfg.featurizer.word_vocab_limit = Some(number(key, value).map_err(at)?),
                "lowercase_roman" => {
                    cfg.featurizer.lowercase_roman = Some(match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(at(format!("`{key}` expects true or false, got `{value}`"))),
                    })
                }
                _ => return Err(at(format!("unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("threshold {} is outside [0, 1]", self.threshold));
        }
        self.remote_endpoint("http://localhost").validate()
    }

    pub fn remote_endpoint(&self, base_url: &str) -> RemoteEndpointConfig {
        RemoteEndpointConfig {
            base_url: base_url.to_string(),
            timeout: Duration::from_millis(self.timeout_ms),
            max_batch: self.max_batch,
            retries: self.retries,
        }
    }
}
