//! Deterministic offline backends.

use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, Embedding, EmbeddingBackend, GatewayError, ModelRole};
use crate::chunker::{count_tokens, split_sentences, truncate_tokens};
use crate::prompts;

pub const MOCK_EMBEDDING_DIM: usize = 256;

/// Prefix of the per-hit header lines in assembled retrieval text.
pub(crate) const HIT_HEADER_PREFIX: &str = "[node ";

/// FNV-1a, 64 bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric words.
pub fn bag_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Bag-of-words hashed into a fixed number of buckets, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    dim: usize,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        Self {
            dim: MOCK_EMBEDDING_DIM,
        }
    }
}

impl HashedBagEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a(word.as_bytes()) % self.dim as u64) as usize
    }

    fn embed_text(&self, index: usize, text: &str) -> Result<Embedding, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyInput { index });
        }
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for w in bag_words(text) {
            v[self.bucket(&w)] += 1.0;
            any = true;
        }
        if !any {
            // Punctuation-only text: hash it whole so it still gets a vector.
            v[self.bucket(text.trim())] = 1.0;
        }
        Embedding::normalized(v).ok_or(GatewayError::InvalidVector { index })
    }
}

impl EmbeddingBackend for HashedBagEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| self.embed_text(i, t))
            .collect()
    }
}

/// Replays a fixed list of replies, one per call, and records every request.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    queue: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<ChatRequest>>,
    calls: AtomicUsize,
}

impl ScriptedChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(replies.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let calls = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        self.requests.lock().unwrap().push(request.clone());
        self.queue
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(GatewayError::ScriptExhausted { calls: calls - 1 })
    }
}

/// Extractive stand-in for a model: sentences that match one of the needle
/// patterns are "surprising"; everything else is the main text.
#[derive(Debug)]
pub struct ExtractiveChat {
    patterns: Vec<String>,
    calls: AtomicUsize,
}

impl ExtractiveChat {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            patterns: patterns
                .into_iter()
                .map(|p| p.as_ref().to_lowercase())
                .collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ExtractiveChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(mock_chat_extractive(request, &self.patterns))
    }
}

pub const NO_ANSWER: &str = "The given context does not contain the answer.";

fn matches_any(sentence: &str, patterns: &[String]) -> bool {
    let lower = sentence.to_lowercase();
    patterns.iter().any(|p| !p.is_empty() && lower.contains(&p.to_lowercase()))
}

fn context_sentences(context: &str) -> Vec<String> {
    context
        .lines()
        .filter(|l| !l.starts_with(HIT_HEADER_PREFIX))
        .flat_map(split_sentences)
        .collect()
}

/// Leading main-text sentences that fit in `max_tokens`; never empty when
/// the context has any sentence.
fn main_text(sentences: &[String], patterns: &[String], max_tokens: usize) -> String {
    let plain: Vec<&String> = sentences
        .iter()
        .filter(|s| !matches_any(s, patterns))
        .collect();
    let pool: Vec<&String> = if plain.is_empty() {
        sentences.iter().take(1).collect()
    } else {
        plain
    };
    let mut out: Vec<&str> = Vec::new();
    let mut used = 0;
    for s in pool {
        let n = count_tokens(s);
        if used + n > max_tokens {
            if out.is_empty() {
                out.push(truncate_tokens(s, max_tokens));
            }
            break;
        }
        used += n;
        out.push(s);
    }
    out.join(" ")
}

fn needle_sentences(sentences: &[String], patterns: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    sentences
        .iter()
        .filter(|s| matches_any(s, patterns))
        .filter(|s| seen.insert(s.as_str().to_owned()))
        .cloned()
        .collect()
}

/// The extractive mock's reply to one request.
///
/// Summary role: main text (up to the request's token cap) plus matched
/// sentences, in the `(Summary):`/`(Surprise):` format under the dual prompt
/// or as bare main text under the plain summary prompt. Answer role: the
/// matched sentences of the retrieved context and memory, in order, without
/// duplicates.
pub fn mock_chat_extractive(request: &ChatRequest, patterns: &[String]) -> String {
    match request.role() {
        ModelRole::Summary => {
            let context = request
                .user_prompt
                .strip_prefix(prompts::BASELINE_SUMMARY_USER_PREFIX)
                .unwrap_or(&request.user_prompt);
            let sentences = context_sentences(context);
            let summary = main_text(&sentences, patterns, request.max_tokens());
            if request.system_prompt == prompts::BASELINE_SUMMARY_SYSTEM {
                return summary;
            }
            let surprise = needle_sentences(&sentences, patterns).join(" ");
            format!("(Summary): {summary}\n(Surprise): {surprise}")
        }
        ModelRole::Answer => {
            let context = if let Some(s) = prompts::parse_loop_user_prompt(&request.user_prompt) {
                format!("{}\n{}", s.retrieved, s.memory)
            } else if let Some((ctx, _)) =
                prompts::parse_single_shot_user_prompt(&request.user_prompt)
            {
                ctx.to_string()
            } else {
                request.user_prompt.clone()
            };
            let found = needle_sentences(&context_sentences(&context), patterns);
            if found.is_empty() {
                NO_ANSWER.to_string()
            } else {
                found.join(" ")
            }
        }
    }
}
