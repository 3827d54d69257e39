//! Two-part summaries: the main summary plus the surprising facts.

use std::fmt;

use thiserror::Error;

use crate::config::RunConfig;
use crate::gateway::{ChatBackend, ChatRequest, GatewayError, ModelParams};
use crate::prompts;

const SUMMARY_MARKER: &str = "(summary):";
const SURPRISE_MARKER: &str = "(surprise):";

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("cannot summarize empty context")]
    EmptyContext,
    #[error("summary reply has no usable (Summary): section: {raw:?}")]
    Unparseable { raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseWarning {
    /// Text before the `(Summary):` marker was dropped.
    LeadingNoise,
    /// No `(Surprise):` marker followed the summary.
    MissingSurprise,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseWarning::LeadingNoise => "leading-noise",
            ParseWarning::MissingSurprise => "missing-surprise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DualSummary {
    pub summary: String,
    pub surprise: String,
    pub parse_warnings: Vec<ParseWarning>,
}

impl DualSummary {
    /// Canonical reply format.
    pub fn to_reply(&self) -> String {
        format!("(Summary): {}\n(Surprise): {}", self.summary, self.surprise)
    }
}

/// Which summary prompt to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryStyle {
    /// Summary plus surprising facts.
    Dual,
    /// A single plain summary; `surprise` is always empty.
    Plain,
}

impl SummaryStyle {
    pub fn from_config(config: &RunConfig) -> Self {
        if config.retriever.surprise_channel {
            SummaryStyle::Dual
        } else {
            SummaryStyle::Plain
        }
    }
}

fn summary_params(config: &RunConfig) -> ModelParams {
    ModelParams::Summary {
        params: config.summary_model.clone(),
        max_tokens: config.retriever.summary_max_tokens,
    }
}

pub fn build_summary_prompt(context: &str, config: &RunConfig) -> Result<ChatRequest, SummarizeError> {
    if context.trim().is_empty() {
        return Err(SummarizeError::EmptyContext);
    }
    Ok(ChatRequest {
        system_prompt: prompts::DUAL_SUMMARY_SYSTEM.to_string(),
        user_prompt: context.to_string(),
        params: summary_params(config),
    })
}

pub fn build_plain_summary_prompt(
    context: &str,
    config: &RunConfig,
) -> Result<ChatRequest, SummarizeError> {
    if context.trim().is_empty() {
        return Err(SummarizeError::EmptyContext);
    }
    Ok(ChatRequest {
        system_prompt: prompts::BASELINE_SUMMARY_SYSTEM.to_string(),
        user_prompt: format!("{}{context}", prompts::BASELINE_SUMMARY_USER_PREFIX),
        params: summary_params(config),
    })
}

/// Splits a reply on the first `(Summary):` and the first `(Surprise):`
/// after it. Markers match case-insensitively.
pub fn parse_dual_summary(reply: &str) -> Result<DualSummary, SummarizeError> {
    // ASCII lowercasing keeps byte offsets aligned with `reply`.
    let lower = reply.to_ascii_lowercase();
    let unparseable = || SummarizeError::Unparseable {
        raw: reply.to_string(),
    };
    let start = lower.find(SUMMARY_MARKER).ok_or_else(unparseable)?;
    let mut warnings = Vec::new();
    if !reply[..start].trim().is_empty() {
        warnings.push(ParseWarning::LeadingNoise);
    }
    let body_start = start + SUMMARY_MARKER.len();
    let (summary, surprise) = match lower[body_start..].find(SURPRISE_MARKER) {
        Some(rel) => {
            let at = body_start + rel;
            (&reply[body_start..at], &reply[at + SURPRISE_MARKER.len()..])
        }
        None => {
            warnings.push(ParseWarning::MissingSurprise);
            (&reply[body_start..], "")
        }
    };
    let summary = summary.trim();
    if summary.is_empty() {
        return Err(unparseable());
    }
    Ok(DualSummary {
        summary: summary.to_string(),
        surprise: surprise.trim().to_string(),
        parse_warnings: warnings,
    })
}

/// Summarizes text through a chat backend.
pub struct Summarizer<'a> {
    chat: &'a dyn ChatBackend,
    config: &'a RunConfig,
    style: SummaryStyle,
}

impl<'a> Summarizer<'a> {
    pub fn new(chat: &'a dyn ChatBackend, config: &'a RunConfig) -> Self {
        Self {
            chat,
            config,
            style: SummaryStyle::from_config(config),
        }
    }

    pub fn style(&self) -> SummaryStyle {
        self.style
    }

    pub fn summarize_chunk(&self, text: &str) -> Result<DualSummary, SummarizeError> {
        match self.style {
            SummaryStyle::Dual => {
                let req = build_summary_prompt(text, self.config)?;
                parse_dual_summary(&self.chat.chat(&req)?)
            }
            SummaryStyle::Plain => {
                let req = build_plain_summary_prompt(text, self.config)?;
                let reply = self.chat.chat(&req)?;
                let summary = reply.trim();
                if summary.is_empty() {
                    return Err(SummarizeError::Unparseable { raw: reply });
                }
                Ok(DualSummary {
                    summary: summary.to_string(),
                    ..DualSummary::default()
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::count_tokens;
    use crate::gateway::mock::{ExtractiveChat, ScriptedChat};
    use proptest::prelude::*;

    #[test]
    fn prompt_is_verbatim() {
        let c = RunConfig::default();
        let req = build_summary_prompt("abc", &c).unwrap();
        assert_eq!(req.user_prompt, "abc");
        assert!(req
            .system_prompt
            .ends_with("(Summary): Your Summary\n\n(Surprise): Surprising Information"));
        assert!(matches!(
            build_summary_prompt("  ", &c),
            Err(SummarizeError::EmptyContext)
        ));
        assert_eq!(req.max_tokens(), 300);
    }

    #[test]
    fn long_context_is_not_truncated() {
        let ctx: String = (0..600).map(|i| format!("w{i} ")).collect();
        let req = build_summary_prompt(ctx.trim(), &RunConfig::default()).unwrap();
        assert_eq!(count_tokens(&req.user_prompt), 600);
    }

    #[test]
    fn parse_canonical() {
        let d = parse_dual_summary("(Summary): A\n(Surprise): B").unwrap();
        assert_eq!((d.summary.as_str(), d.surprise.as_str()), ("A", "B"));
        assert!(d.parse_warnings.is_empty());
    }

    #[test]
    fn parse_missing_surprise() {
        let d = parse_dual_summary("(Summary): A").unwrap();
        assert_eq!(d.summary, "A");
        assert_eq!(d.surprise, "");
        assert_eq!(d.parse_warnings, vec![ParseWarning::MissingSurprise]);
    }

    #[test]
    fn parse_leading_noise_any_case() {
        let d = parse_dual_summary("noise (summary): A (SURPRISE): B").unwrap();
        assert_eq!((d.summary.as_str(), d.surprise.as_str()), ("A", "B"));
        assert_eq!(d.parse_warnings, vec![ParseWarning::LeadingNoise]);
    }

    #[test]
    fn parse_rejects_missing_summary() {
        assert!(matches!(
            parse_dual_summary("(Surprise): only this"),
            Err(SummarizeError::Unparseable { .. })
        ));
        assert!(matches!(
            parse_dual_summary("(Summary):   \n(Surprise): x"),
            Err(SummarizeError::Unparseable { .. })
        ));
    }

    #[test]
    fn summarize_with_extractive_mock() {
        let chat = ExtractiveChat::new(["secret ingredients"]);
        let c = RunConfig::default();
        let s = Summarizer::new(&chat, &c);
        let needle = "Prosciutto is one of the secret ingredients needed to build the perfect pizza.";
        let d = s
            .summarize_chunk(&format!("Rivers flow to the sea. {needle} Rain falls."))
            .unwrap();
        assert_eq!(d.surprise, needle);
        assert_eq!(d.summary, "Rivers flow to the sea. Rain falls.");
        let d = s.summarize_chunk("Rivers flow. Rain falls.").unwrap();
        assert_eq!(d.surprise, "");
    }

    #[test]
    fn plain_style_uses_single_summary_prompt() {
        let chat = ScriptedChat::new(["  just a summary "]);
        let mut c = RunConfig::default();
        c.retriever.surprise_channel = false;
        let d = Summarizer::new(&chat, &c).summarize_chunk("text").unwrap();
        assert_eq!(d.summary, "just a summary");
        assert_eq!(d.surprise, "");
        let req = &chat.requests()[0];
        assert_eq!(req.system_prompt, prompts::BASELINE_SUMMARY_SYSTEM);
        assert_eq!(
            req.user_prompt,
            "Write a summary of the following context, just including the most important details: text"
        );
    }

    proptest! {
        #[test]
        fn canonical_round_trip(
            summary in "[A-Za-z0-9][A-Za-z0-9 ,.'\n-]{0,80}[A-Za-z0-9.]",
            surprise in "([A-Za-z0-9][A-Za-z0-9 ,.'\n-]{0,80}[A-Za-z0-9.])?",
        ) {
            let d = DualSummary { summary, surprise, parse_warnings: vec![] };
            prop_assert_eq!(parse_dual_summary(&d.to_reply()).unwrap(), d);
        }

        #[test]
        fn never_panics_without_surprise_marker(text in "\\PC*") {
            let _ = parse_dual_summary(&text);
            let with = format!("(Summary): x {text}");
            if !with.to_ascii_lowercase().contains(SURPRISE_MARKER) {
                prop_assert!(parse_dual_summary(&with).is_ok());
            }
        }
    }
}
