//! Run configuration: model parameters, retriever tunables and loop limits.
//!
//! The on-disk format is TOML with one table per section. Every field has a
//! default, so an empty file is a valid configuration. Individual fields can
//! be overridden with `section.key=value` strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    MissingFile(PathBuf),
    #[error("could not read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("malformed override `{0}` (expected section.key=value)")]
    BadOverride(String),
    #[error("value out of range for `{key}`: {reason}")]
    OutOfRange { key: &'static str, reason: String },
}

/// Parameters for the model that writes answers into short-term memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnswerModelParams {
    pub url: String,
    pub model: String,
    pub api_key: String,
    pub temperature: f64,
    pub frequency_penalty: f64,
    /// Token budget of one answer; also the capacity of short-term memory.
    pub max_tokens: u32,
}

impl Default for AnswerModelParams {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8080".into(),
            model: "answer-model".into(),
            api_key: String::new(),
            temperature: 0.0,
            frequency_penalty: 1.2,
            max_tokens: 200,
        }
    }
}

/// Sampler settings for the summary model, as a llama.cpp server takes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryModelParams {
    pub url: String,
    pub model: String,
    pub api_key: String,
    pub temperature: f64,
    pub repeat_penalty: f64,
    pub repeat_last_n: i64,
    pub top_k: i64,
    pub top_p: f64,
    pub min_p: f64,
    pub n_predict: u32,
    pub typical_p: f64,
    pub tfs_z: f64,
    pub mirostat: i64,
    pub mirostat_eta: f64,
    pub mirostat_tau: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub penalize_newline: bool,
}

impl Default for SummaryModelParams {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8080".into(),
            model: "summary-model".into(),
            api_key: String::new(),
            temperature: 0.2,
            repeat_penalty: 1.18,
            repeat_last_n: 256,
            top_k: 40,
            top_p: 0.95,
            min_p: 0.05,
            n_predict: 1055,
            typical_p: 1.0,
            tfs_z: 1.0,
            mirostat: 0,
            mirostat_eta: 0.1,
            mirostat_tau: 5.0,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            penalize_newline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingParams {
    pub url: String,
    pub model: String,
    pub api_key: String,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8081".into(),
            model: "multi-qa-mpnet-base-cos-v1".into(),
            api_key: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverParams {
    pub chunk_max_tokens: usize,
    pub summary_max_tokens: usize,
    pub retrieval_top_k: usize,
    pub retrieval_token_budget: usize,
    /// Layers with fewer summary nodes than this are not clustered further.
    pub min_layer_size: usize,
    pub soft_assign_threshold: f64,
    /// Upper bound of the BIC sweep; the effective bound is `min(this, n - 1)`.
    pub bic_k_max: usize,
    pub rng_seed: u64,
    /// When false, summaries use the plain single-summary prompt and no
    /// surprise nodes are produced.
    pub surprise_channel: bool,
}

impl Default for RetrieverParams {
    fn default() -> Self {
        Self {
            chunk_max_tokens: 600,
            summary_max_tokens: 300,
            retrieval_top_k: 10,
            retrieval_token_budget: 2000,
            min_layer_size: 5,
            soft_assign_threshold: 0.1,
            bic_k_max: 50,
            rng_seed: 42,
            surprise_channel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LcsGranularity {
    Word,
    Character,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopParams {
    pub max_rounds: usize,
    pub convergence_threshold: f64,
    pub lcs_granularity: LcsGranularity,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            max_rounds: 5,
            convergence_threshold: 0.9,
            lcs_granularity: LcsGranularity::Word,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpParams {
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpParams {
    fn default() -> Self {
        Self {
            timeout_secs: 120,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

/// Settings for the offline mock backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockParams {
    /// Case-insensitive substrings marking the sentences the extractive
    /// mock treats as surprising.
    pub needle_patterns: Vec<String>,
}

impl Default for MockParams {
    fn default() -> Self {
        Self {
            needle_patterns: vec!["secret ingredient".into()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub answer_model: AnswerModelParams,
    pub summary_model: SummaryModelParams,
    pub embedding: EmbeddingParams,
    pub retriever: RetrieverParams,
    #[serde(rename = "loop")]
    pub inner_loop: LoopParams,
    pub http: HttpParams,
    pub mock: MockParams,
}

impl RunConfig {
    /// Parses TOML text, rejecting unknown keys, then validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::with_overrides::<&str>(text, &[])
    }

    /// Parses TOML text and applies `section.key=value` overrides on top.
    pub fn with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Malformed(e.message().to_string()))?;
        let known = known_keys();
        check_known(&table, &known)?;
        for raw in overrides {
            apply_override(&mut table, raw.as_ref(), &known)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Malformed(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key, reason: &str| {
            Err(ConfigError::OutOfRange {
                key,
                reason: reason.to_string(),
            })
        };
        let a = &self.answer_model;
        if a.max_tokens == 0 {
            return fail("answer_model.max_tokens", "must be > 0");
        }
        if a.temperature.is_nan() || a.temperature < 0.0 {
            return fail("answer_model.temperature", "must be >= 0");
        }
        let s = &self.summary_model;
        if s.n_predict == 0 {
            return fail("summary_model.n_predict", "must be > 0");
        }
        if !(s.top_p > 0.0 && s.top_p <= 1.0) {
            return fail("summary_model.top_p", "must lie in (0, 1]");
        }
        if s.top_k < 0 {
            return fail("summary_model.top_k", "must be >= 0");
        }
        let r = &self.retriever;
        if r.summary_max_tokens == 0 {
            return fail("retriever.summary_max_tokens", "must be > 0");
        }
        if r.chunk_max_tokens <= r.summary_max_tokens {
            return fail(
                "retriever.chunk_max_tokens",
                "must exceed retriever.summary_max_tokens",
            );
        }
        if r.retrieval_top_k == 0 {
            return fail("retriever.retrieval_top_k", "must be >= 1");
        }
        if !(r.soft_assign_threshold > 0.0 && r.soft_assign_threshold < 1.0) {
            return fail("retriever.soft_assign_threshold", "must lie in (0, 1)");
        }
        if r.bic_k_max == 0 {
            return fail("retriever.bic_k_max", "must be >= 1");
        }
        let l = &self.inner_loop;
        if l.max_rounds == 0 {
            return fail("loop.max_rounds", "must be >= 1");
        }
        if !(l.convergence_threshold > 0.0 && l.convergence_threshold <= 1.0) {
            return fail("loop.convergence_threshold", "must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Loads a config file (if given) and applies overrides.
pub fn load_config<S: AsRef<str>>(
    path: Option<&Path>,
    overrides: &[S],
) -> Result<RunConfig, ConfigError> {
    let text = match path {
        None => String::new(),
        Some(p) => {
            if !p.exists() {
                return Err(ConfigError::MissingFile(p.to_path_buf()));
            }
            std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?
        }
    };
    RunConfig::with_overrides(&text, overrides)
}

fn known_keys() -> toml::Table {
    toml::Table::try_from(RunConfig::default()).expect("default config serializes")
}

fn check_known(table: &toml::Table, known: &toml::Table) -> Result<(), ConfigError> {
    for (section, value) in table {
        let Some(known_section) = known.get(section).and_then(|v| v.as_table()) else {
            return Err(ConfigError::UnknownKey(section.clone()));
        };
        let Some(fields) = value.as_table() else {
            return Err(ConfigError::Malformed(format!(
                "`{section}` must be a table"
            )));
        };
        for key in fields.keys() {
            if !known_section.contains_key(key) {
                return Err(ConfigError::UnknownKey(format!("{section}.{key}")));
            }
        }
    }
    Ok(())
}

fn apply_override(table: &mut toml::Table, raw: &str, known: &toml::Table) -> Result<(), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let key = key.trim();
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let known_field = known
        .get(section)
        .and_then(|s| s.as_table())
        .and_then(|s| s.get(field))
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
    let value = parse_override_value(value.trim(), known_field);
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry.as_table_mut() {
        Some(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        None => Err(ConfigError::Malformed(format!("`{section}` must be a table"))),
    }
}

/// Reads an override as a TOML literal, falling back to a bare string when
/// the target field is a string (so `--set answer_model.url=http://x` works).
fn parse_override_value(raw: &str, like: &toml::Value) -> toml::Value {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"));
    match (parsed, like) {
        (Some(toml::Value::Integer(i)), toml::Value::Float(_)) => toml::Value::Float(i as f64),
        (Some(v), toml::Value::String(_)) if !v.is_str() => toml::Value::String(raw.to_string()),
        (Some(v), _) => v,
        (None, toml::Value::Array(_)) => toml::Value::Array(
            raw.split(',')
                .map(|s| toml::Value::String(s.trim().to_string()))
                .collect(),
        ),
        (None, _) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c.retriever.chunk_max_tokens, 600);
        assert_eq!(c.retriever.summary_max_tokens, 300);
        assert_eq!(c.answer_model.temperature, 0.0);
        assert_eq!(c.answer_model.frequency_penalty, 1.2);
        assert_eq!(c.answer_model.max_tokens, 200);
        let s = &c.summary_model;
        assert_eq!(s.repeat_last_n, 256);
        assert_eq!(s.repeat_penalty, 1.18);
        assert!(!s.penalize_newline);
        assert_eq!(s.presence_penalty, 0.0);
        assert_eq!(s.min_p, 0.05);
        assert_eq!(s.n_predict, 1055);
        assert_eq!(s.mirostat, 0);
        assert_eq!(s.mirostat_eta, 0.1);
        assert_eq!(s.mirostat_tau, 5.0);
        assert_eq!(s.tfs_z, 1.0);
        assert_eq!(s.top_k, 40);
        assert_eq!(s.top_p, 0.95);
        assert_eq!(s.typical_p, 1.0);
        assert_eq!(s.frequency_penalty, 0.0);
        assert_eq!(s.temperature, 0.2);
        assert_eq!(c.inner_loop.max_rounds, 5);
        assert_eq!(c.inner_loop.convergence_threshold, 0.9);
        assert_eq!(c.inner_loop.lcs_granularity, LcsGranularity::Word);
        assert_eq!(c.retriever.retrieval_top_k, 10);
        assert_eq!(c.retriever.retrieval_token_budget, 2000);
        assert_eq!(c.retriever.min_layer_size, 5);
        assert_eq!(c.retriever.soft_assign_threshold, 0.1);
        assert_eq!(c.retriever.bic_k_max, 50);
        assert_eq!(c.retriever.rng_seed, 42);
        assert_eq!(c.http.timeout_secs, 120);
        assert_eq!(c.http.retries, 2);
    }

    #[test]
    fn override_max_rounds() {
        let c = RunConfig::with_overrides("", &["loop.max_rounds=1"]).unwrap();
        assert_eq!(c.inner_loop.max_rounds, 1);
    }

    #[test]
    fn chunk_limit_below_summary_limit_is_rejected() {
        let err = RunConfig::with_overrides(
            "",
            &["retriever.chunk_max_tokens=100", "retriever.summary_max_tokens=300"],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ConfigError::OutOfRange {
                key: "retriever.chunk_max_tokens",
                ..
            }
        ));
    }

    #[test]
    fn error_kinds_are_distinct() {
        let missing = load_config(Some(Path::new("/nonexistent/ilmtr.toml")), &[] as &[&str]);
        assert!(matches!(missing, Err(ConfigError::MissingFile(_))));
        assert!(matches!(
            RunConfig::from_toml_str("[retriever\nx=1"),
            Err(ConfigError::Malformed(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[retriever]\nchunk_size = 3\n"),
            Err(ConfigError::UnknownKey(k)) if k == "retriever.chunk_size"
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[nope]\n"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::with_overrides("", &["loop.rounds=3"]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::with_overrides("", &["max_rounds"]),
            Err(ConfigError::BadOverride(_))
        ));
        assert!(matches!(
            RunConfig::with_overrides("", &["loop.convergence_threshold=0"]),
            Err(ConfigError::OutOfRange { .. })
        ));
    }

    #[test]
    fn string_and_list_overrides() {
        let c = RunConfig::with_overrides(
            "",
            &[
                "answer_model.url=http://10.0.0.2:9000",
                "mock.needle_patterns=apple, kitchen",
                "summary_model.temperature=1",
                "loop.lcs_granularity=character",
            ],
        )
        .unwrap();
        assert_eq!(c.answer_model.url, "http://10.0.0.2:9000");
        assert_eq!(c.mock.needle_patterns, vec!["apple", "kitchen"]);
        assert_eq!(c.summary_model.temperature, 1.0);
        assert_eq!(c.inner_loop.lcs_granularity, LcsGranularity::Character);
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            temp in 0.0f64..2.0,
            max_tokens in 1u32..4096,
            summary in 1usize..1000,
            extra in 1usize..1000,
            top_k in 1usize..100,
            threshold in 0.01f64..0.99,
            rounds in 1usize..20,
            conv in 0.01f64..=1.0,
            seed in 0u64..(i64::MAX as u64),
            surprise in any::<bool>(),
        ) {
            let mut c = RunConfig::default();
            c.answer_model.temperature = temp;
            c.answer_model.max_tokens = max_tokens;
            c.retriever.summary_max_tokens = summary;
            c.retriever.chunk_max_tokens = summary + extra;
            c.retriever.retrieval_top_k = top_k;
            c.retriever.soft_assign_threshold = threshold;
            c.retriever.rng_seed = seed;
            c.retriever.surprise_channel = surprise;
            c.inner_loop.max_rounds = rounds;
            c.inner_loop.convergence_threshold = conv;
            let text = c.to_toml_string();
            let back = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
