//! OpenAI-compatible HTTP backends (`/v1/chat/completions`, `/v1/embeddings`).

use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{
    check_dims, ChatBackend, ChatRequest, Embedding, EmbeddingBackend, GatewayError, ModelParams,
};
use crate::config::{HttpParams, RunConfig};

const CHAT_PATH: &str = "/v1/chat/completions";
const EMBED_PATH: &str = "/v1/embeddings";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

/// Request body for `/v1/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
    pub frequency_penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub presence_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top_p: Option<f64>,
}

impl WireChatRequest {
    pub fn from_request(model: &str, req: &ChatRequest) -> Self {
        let messages = vec![
            WireMessage {
                role: "system".into(),
                content: req.system_prompt.clone(),
            },
            WireMessage {
                role: "user".into(),
                content: req.user_prompt.clone(),
            },
        ];
        match &req.params {
            ModelParams::Answer(p) => Self {
                model: model.to_string(),
                messages,
                temperature: p.temperature,
                max_tokens: p.max_tokens as usize,
                frequency_penalty: p.frequency_penalty,
                presence_penalty: None,
                top_p: None,
            },
            ModelParams::Summary { params: p, max_tokens } => {
                debug!(
                    "sampler fields not carried by the chat schema: top_k={} min_p={} \
                     repeat_penalty={} repeat_last_n={} typical_p={} tfs_z={} mirostat={} \
                     mirostat_eta={} mirostat_tau={} penalize_nl={} n_predict={}",
                    p.top_k,
                    p.min_p,
                    p.repeat_penalty,
                    p.repeat_last_n,
                    p.typical_p,
                    p.tfs_z,
                    p.mirostat,
                    p.mirostat_eta,
                    p.mirostat_tau,
                    p.penalize_newline,
                    p.n_predict
                );
                Self {
                    model: model.to_string(),
                    messages,
                    temperature: p.temperature,
                    max_tokens: *max_tokens,
                    frequency_penalty: p.frequency_penalty,
                    presence_penalty: Some(p.presence_penalty),
                    top_p: Some(p.top_p),
                }
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireReplyMessage,
}

#[derive(Debug, Deserialize)]
struct WireReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEmbedRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct WireEmbedResponse {
    data: Vec<WireEmbedding>,
}

#[derive(Debug, Deserialize)]
struct WireEmbedding {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

fn endpoint(base: &str, path: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(path) {
        base.to_string()
    } else if base.ends_with("/v1") {
        format!("{base}{}", &path[3..])
    } else {
        format!("{base}{path}")
    }
}

/// Blocking JSON poster with retry on transport errors.
#[derive(Debug, Clone)]
struct Poster {
    agent: ureq::Agent,
    url: String,
    api_key: String,
    retries: u32,
    backoff: Duration,
}

impl Poster {
    fn new(url: String, api_key: &str, http: &HttpParams) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(http.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            url,
            api_key: api_key.to_string(),
            retries: http.retries,
            backoff: Duration::from_millis(http.backoff_ms),
        }
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, GatewayError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let mut req = self.agent.post(&self.url);
            if !self.api_key.is_empty() {
                req = req.header("Authorization", format!("Bearer {}", self.api_key));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| GatewayError::Decode(e.to_string()))?;
                    if !(200..300).contains(&status) {
                        return Err(GatewayError::Status {
                            status,
                            body: text,
                            attempts: attempt,
                        });
                    }
                    return serde_json::from_str(&text)
                        .map_err(|e| GatewayError::Decode(e.to_string()));
                }
                Err(e) if attempt <= self.retries => {
                    let wait = self.backoff * 2u32.pow(attempt - 1);
                    warn!("{} failed ({e}); retrying in {wait:?}", self.url);
                    std::thread::sleep(wait);
                }
                Err(e) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        }
    }
}

/// Chat backend for one model endpoint.
#[derive(Debug, Clone)]
pub struct OpenAiChat {
    poster: Poster,
    model: String,
}

impl OpenAiChat {
    pub fn new(base_url: &str, model: &str, api_key: &str, http: &HttpParams) -> Self {
        Self {
            poster: Poster::new(endpoint(base_url, CHAT_PATH), api_key, http),
            model: model.to_string(),
        }
    }

    pub fn url(&self) -> &str {
        &self.poster.url
    }
}

impl ChatBackend for OpenAiChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = WireChatRequest::from_request(&self.model, request);
        let resp: WireChatResponse = self.poster.post(&body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        Ok(text)
    }
}

/// Sends answer-role requests to one endpoint and summary-role requests to
/// another.
#[derive(Debug, Clone)]
pub struct RoutedChat {
    pub answer: OpenAiChat,
    pub summary: OpenAiChat,
}

impl RoutedChat {
    pub fn from_config(config: &RunConfig) -> Self {
        let a = &config.answer_model;
        let s = &config.summary_model;
        Self {
            answer: OpenAiChat::new(&a.url, &a.model, &a.api_key, &config.http),
            summary: OpenAiChat::new(&s.url, &s.model, &s.api_key, &config.http),
        }
    }
}

impl ChatBackend for RoutedChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        match request.params {
            ModelParams::Answer(_) => self.answer.chat(request),
            ModelParams::Summary { .. } => self.summary.chat(request),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiEmbedder {
    poster: Poster,
    model: String,
}

impl OpenAiEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: &str, http: &HttpParams) -> Self {
        Self {
            poster: Poster::new(endpoint(base_url, EMBED_PATH), api_key, http),
            model: model.to_string(),
        }
    }

    pub fn from_config(config: &RunConfig) -> Self {
        let e = &config.embedding;
        Self::new(&e.url, &e.model, &e.api_key, &config.http)
    }
}

impl EmbeddingBackend for OpenAiEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::EmptyInput { index });
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = WireEmbedRequest {
            model: self.model.clone(),
            input: texts.to_vec(),
        };
        let resp: WireEmbedResponse = self.poster.post(&body)?;
        if resp.data.len() != texts.len() {
            return Err(GatewayError::Decode(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        let mut data: Vec<(usize, Vec<f64>)> = resp
            .data
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d.index.unwrap_or(i), d.embedding))
            .collect();
        data.sort_by_key(|(i, _)| *i);
        let out = data
            .into_iter()
            .enumerate()
            .map(|(i, (_, v))| Embedding::normalized(v).ok_or(GatewayError::InvalidVector { index: i }))
            .collect::<Result<Vec<_>, _>>()?;
        check_dims(&out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_joining() {
        assert_eq!(endpoint("http://h:1", CHAT_PATH), "http://h:1/v1/chat/completions");
        assert_eq!(endpoint("http://h:1/", CHAT_PATH), "http://h:1/v1/chat/completions");
        assert_eq!(endpoint("http://h:1/v1", EMBED_PATH), "http://h:1/v1/embeddings");
        assert_eq!(
            endpoint("http://h:1/v1/chat/completions", CHAT_PATH),
            "http://h:1/v1/chat/completions"
        );
    }
}
