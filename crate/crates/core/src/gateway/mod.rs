//! Chat and embedding backends.
//!
//! [`http`] speaks the OpenAI-compatible wire protocol; [`mock`] holds the
//! deterministic doubles used by tests and by `--mock` runs.

pub mod http;
pub mod mock;

use thiserror::Error;

use crate::config::{AnswerModelParams, SummaryModelParams};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        body: String,
        attempts: u32,
    },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("could not decode backend response: {0}")]
    Decode(String),
    #[error("scripted backend exhausted after {calls} call(s)")]
    ScriptExhausted { calls: usize },
    #[error("embedding {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("text {index} is empty")]
    EmptyInput { index: usize },
    #[error("embedding {index} is zero or not finite")]
    InvalidVector { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    Summary,
    Answer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Answer(AnswerModelParams),
    Summary {
        params: SummaryModelParams,
        /// Output cap for one summary.
        max_tokens: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub params: ModelParams,
}

impl ChatRequest {
    pub fn role(&self) -> ModelRole {
        match self.params {
            ModelParams::Answer(_) => ModelRole::Answer,
            ModelParams::Summary { .. } => ModelRole::Summary,
        }
    }

    pub fn max_tokens(&self) -> usize {
        match &self.params {
            ModelParams::Answer(p) => p.max_tokens as usize,
            ModelParams::Summary { max_tokens, .. } => *max_tokens,
        }
    }
}

/// A unit-length embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f64>,
    norm: f64,
}

impl Embedding {
    /// Normalizes `raw` to unit length. Fails on zero or non-finite input.
    pub fn normalized(raw: Vec<f64>) -> Option<Self> {
        if raw.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        let vector: Vec<f64> = raw.into_iter().map(|x| x / norm).collect();
        Some(Self::from_unit(vector))
    }

    /// Wraps a vector that is already unit length (e.g. read back from disk).
    pub fn from_unit(vector: Vec<f64>) -> Self {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self { vector, norm }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Cosine similarity; a plain dot product since both sides are unit length.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError>;

    fn embed_one(&self, text: &str) -> Result<Embedding, GatewayError> {
        let mut v = self.embed(&[text.to_string()])?;
        v.pop().ok_or(GatewayError::EmptyCompletion)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        (**self).chat(request)
    }
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for std::sync::Arc<T> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        (**self).embed(texts)
    }
}

/// Checks a batch for a shared dimension.
pub(crate) fn check_dims(batch: &[Embedding]) -> Result<(), GatewayError> {
    if let Some(first) = batch.first() {
        let expected = first.dim();
        if let Some((index, e)) = batch.iter().enumerate().find(|(_, e)| e.dim() != expected) {
            return Err(GatewayError::DimensionMismatch {
                index,
                expected,
                got: e.dim(),
            });
        }
    }
    Ok(())
}

/// The pair of backends a pipeline run needs.
#[derive(Clone)]
pub struct Backends {
    pub chat: std::sync::Arc<dyn ChatBackend>,
    pub embed: std::sync::Arc<dyn EmbeddingBackend>,
}

impl Backends {
    pub fn new(chat: impl ChatBackend + 'static, embed: impl EmbeddingBackend + 'static) -> Self {
        Self {
            chat: std::sync::Arc::new(chat),
            embed: std::sync::Arc::new(embed),
        }
    }
}
