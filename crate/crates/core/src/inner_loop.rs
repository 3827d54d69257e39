//! The inner query loop: answer into short-term memory (STM), re-retrieve
//! with the STM appended to the question, and stop once consecutive STM
//! texts agree under a normalized LCS ratio.

use std::str::FromStr;

use log::debug;

use crate::chunker::{count_tokens, truncate_tokens};
use crate::config::{AnswerModelParams, LcsGranularity, RunConfig};
use crate::gateway::{Backends, ChatRequest, ModelParams};
use crate::index::{collapsed_retrieve, RetrievalIndex, RetrievedInfo};
use crate::prompts::{self, LoopSections};
use crate::tree::NodeId;

/// Length of the longest common subsequence of `a` and `b`.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; inner.len() + 1];
    for x in outer {
        let mut diag = 0;
        for (j, y) in inner.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[inner.len()]
}

pub fn lcs_tokens(text: &str, granularity: LcsGranularity) -> Vec<&str> {
    match granularity {
        LcsGranularity::Word => text.split_whitespace().collect(),
        LcsGranularity::Character => text
            .char_indices()
            .map(|(i, c)| &text[i..i + c.len_utf8()])
            .collect(),
    }
}

/// `lcs / max(len)`; two empty texts count as identical.
pub fn convergence_ratio(prev: &str, curr: &str, granularity: LcsGranularity) -> f64 {
    let a = lcs_tokens(prev, granularity);
    let b = lcs_tokens(curr, granularity);
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    lcs_length(&a, &b) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShortTermMemory {
    pub text: String,
    pub round: usize,
}

impl ShortTermMemory {
    /// Replaces the whole buffer, capped at `max_tokens`.
    pub fn overwrite(&mut self, answer: &str, max_tokens: usize) {
        if count_tokens(answer) > max_tokens {
            debug!("answer exceeds STM capacity of {max_tokens} tokens; truncating");
        }
        self.text = truncate_tokens(answer, max_tokens).to_string();
        self.round += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    /// Single-shot answering from one retrieval.
    SingleShot,
    /// Same prompt and single round over a tree with surprise nodes.
    NoLoop,
    /// The full STM loop.
    Full,
}

impl QueryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::SingleShot => "single",
            QueryMode::NoLoop => "no-loop",
            QueryMode::Full => "full",
        }
    }
}

impl FromStr for QueryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(QueryMode::SingleShot),
            "no-loop" => Ok(QueryMode::NoLoop),
            "full" => Ok(QueryMode::Full),
            other => Err(format!("unknown mode `{other}` (expected single, no-loop or full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRound {
    pub round: usize,
    pub retrieval_query: String,
    pub retrieved_ids: Vec<NodeId>,
    pub stm_text: String,
    /// Ratio against the previous round's STM (the empty STM for round 1).
    pub convergence_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopFailure {
    pub round: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopTrace {
    pub rounds: Vec<LoopRound>,
    pub converged: bool,
    pub final_answer: String,
    pub error: Option<LoopFailure>,
}

fn answer_params(params: &AnswerModelParams) -> ModelParams {
    ModelParams::Answer(params.clone())
}

pub fn build_loop_prompt(
    retrieved: &RetrievedInfo,
    stm: &ShortTermMemory,
    query: &str,
    params: &AnswerModelParams,
) -> ChatRequest {
    ChatRequest {
        system_prompt: prompts::INNER_LOOP_SYSTEM.to_string(),
        user_prompt: prompts::render_loop_user_prompt(&LoopSections {
            retrieved: retrieved.assembled_text.clone(),
            memory: stm.text.clone(),
            question: query.to_string(),
        }),
        params: answer_params(params),
    }
}

pub fn build_single_shot_prompt(
    retrieved: &RetrievedInfo,
    query: &str,
    params: &AnswerModelParams,
) -> ChatRequest {
    ChatRequest {
        system_prompt: prompts::SINGLE_SHOT_SYSTEM.to_string(),
        user_prompt: prompts::single_shot_user_prompt(&retrieved.assembled_text, query),
        params: answer_params(params),
    }
}

/// Next retrieval query: the question, a newline, then the STM text.
pub fn requery_text(query: &str, stm: &str) -> String {
    format!("{query}\n{stm}")
}

/// Runs the loop with `config.inner_loop.max_rounds` as the cap. A cap of
/// one uses the single-shot prompt.
pub fn run_inner_loop(
    index: &RetrievalIndex,
    query: &str,
    config: &RunConfig,
    backends: &Backends,
) -> LoopTrace {
    run_query(index, query, QueryMode::Full, config, backends)
}

pub fn run_query(
    index: &RetrievalIndex,
    query: &str,
    mode: QueryMode,
    config: &RunConfig,
    backends: &Backends,
) -> LoopTrace {
    let max_rounds = match mode {
        QueryMode::Full => config.inner_loop.max_rounds,
        QueryMode::SingleShot | QueryMode::NoLoop => 1,
    };
    let single = max_rounds == 1;
    let granularity = config.inner_loop.lcs_granularity;
    let answer = &config.answer_model;
    let mut trace = LoopTrace::default();
    let mut stm = ShortTermMemory::default();

    for round in 1..=max_rounds {
        let retrieval_query = if round == 1 {
            query.to_string()
        } else {
            requery_text(query, &stm.text)
        };
        let retrieved = match collapsed_retrieve(
            index,
            &retrieval_query,
            &config.retriever,
            backends.embed.as_ref(),
        ) {
            Ok(r) => r,
            Err(e) => {
                trace.error = Some(LoopFailure {
                    round,
                    message: e.to_string(),
                });
                break;
            }
        };
        let request = if single {
            build_single_shot_prompt(&retrieved, query, answer)
        } else {
            build_loop_prompt(&retrieved, &stm, query, answer)
        };
        let reply = match backends.chat.chat(&request) {
            Ok(r) => r,
            Err(e) => {
                trace.error = Some(LoopFailure {
                    round,
                    message: e.to_string(),
                });
                break;
            }
        };
        let previous = std::mem::take(&mut stm.text);
        stm.overwrite(&reply, answer.max_tokens as usize);
        let ratio = convergence_ratio(&previous, &stm.text, granularity);
        debug!("round {round}: ratio {ratio:.4}");
        trace.rounds.push(LoopRound {
            round,
            retrieval_query,
            retrieved_ids: retrieved.ids(),
            stm_text: stm.text.clone(),
            convergence_ratio: ratio,
        });
        if round >= 2 && ratio >= config.inner_loop.convergence_threshold {
            trace.converged = true;
            break;
        }
    }
    trace.final_answer = stm.text;
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_basics() {
        let a: Vec<char> = "abcbdab".chars().collect();
        let b: Vec<char> = "bdcaba".chars().collect();
        assert_eq!(lcs_length(&a, &b), 4);
        assert_eq!(lcs_length(&a, &a), a.len());
        assert_eq!(lcs_length(&['x', 'y'], &['p', 'q']), 0);
        assert_eq!(lcs_length::<u8>(&[], &[1, 2]), 0);
    }

    #[test]
    fn ratio_examples() {
        let w = LcsGranularity::Word;
        assert_eq!(convergence_ratio("same words", "same words", w), 1.0);
        assert_eq!(convergence_ratio("", "a b c", w), 0.0);
        assert_eq!(convergence_ratio("", "", w), 1.0);
        assert_eq!(convergence_ratio("a b c d", "a b x d", w), 0.75);
        assert_eq!(
            convergence_ratio("abcd", "abxd", LcsGranularity::Character),
            0.75
        );
    }

    #[test]
    fn initial_memory_section_is_empty() {
        let r = RetrievedInfo {
            assembled_text: "ctx".into(),
            ..Default::default()
        };
        let req = build_loop_prompt(&r, &ShortTermMemory::default(), "q", &AnswerModelParams::default());
        assert_eq!(req.user_prompt, "(Retrieved Info):\nctx\n(Memory):\n\n(Question):\nq");
        assert!(req.system_prompt.ends_with(
            "Keep your output short and don't return any unrelated words."
        ));
    }

    #[test]
    fn exemplar_prompt_layout() {
        let r = RetrievedInfo {
            assembled_text: "a2 = 1".into(),
            ..Default::default()
        };
        let stm = ShortTermMemory {
            text: "a1 = a2+a3".into(),
            round: 1,
        };
        let req = build_loop_prompt(&r, &stm, "What is the value of a1", &AnswerModelParams::default());
        assert!(prompts::INNER_LOOP_SYSTEM.contains(&req.user_prompt));
    }

    #[test]
    fn stm_overwrite_caps_tokens() {
        let mut stm = ShortTermMemory::default();
        stm.overwrite("one two three", 2);
        assert_eq!(stm.text, "one two");
        stm.overwrite("four", 2);
        assert_eq!((stm.text.as_str(), stm.round), ("four", 2));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("single".parse::<QueryMode>(), Ok(QueryMode::SingleShot));
        assert_eq!("no-loop".parse::<QueryMode>(), Ok(QueryMode::NoLoop));
        assert_eq!("full".parse::<QueryMode>(), Ok(QueryMode::Full));
        assert!("loop".parse::<QueryMode>().is_err());
    }
}
