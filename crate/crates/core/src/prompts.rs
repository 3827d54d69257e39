//! Prompt templates and the section layout of the inner-loop user prompt.

/// System prompt for the summary model when the surprise channel is on.
pub const DUAL_SUMMARY_SYSTEM: &str = "I will give you context. Most of it could be about the same things, but there may be some abnormal information. An surprising sentence is not related to most of the other content. You should summarize the context with the necessary information and also include any surprising information you think. Don't return any unrelated words.\n\nAlways and only return your answer with the following format, just list the fact based on given text, no comments, use different sentences to describe different facts:\n\n(Summary): Your Summary\n\n(Surprise): Surprising Information";

/// System prompt for the plain summarizer (surprise channel off).
pub const BASELINE_SUMMARY_SYSTEM: &str = "You are a reader who can summarize the given text while including important details. Do not provide any comments, just give the summary.";

pub const BASELINE_SUMMARY_USER_PREFIX: &str =
    "Write a summary of the following context, just including the most important details: ";

/// System prompt for single-shot answering.
pub const SINGLE_SHOT_SYSTEM: &str = "You are Question Answering Portal.";

pub const SINGLE_SHOT_CONTEXT_PREFIX: &str = "Given Context: ";
pub const SINGLE_SHOT_QUESTION_INFIX: &str = " Give the best full answer to question ";

/// System prompt for every round of the inner loop.
pub const INNER_LOOP_SYSTEM: &str = "You will be given some Retrieved Info and memory, and you will use this information to answer a question. If you can't answer the question, you can write something related to the question to help others answer it.\n(Retrieved Info):\na2 = 1\n(Memory):\na1 = a2+a3\n(Question):\nWhat is the value of a1\n(Your Output):\na1 = a2 + a3. a2=1. We need to find the value of a3.\n\nKeep your output short and don't return any unrelated words.";

pub const RETRIEVED_MARKER: &str = "(Retrieved Info):";
pub const MEMORY_MARKER: &str = "(Memory):";
pub const QUESTION_MARKER: &str = "(Question):";

const MARKERS: [&str; 3] = [RETRIEVED_MARKER, MEMORY_MARKER, QUESTION_MARKER];

pub fn single_shot_user_prompt(retrieved: &str, question: &str) -> String {
    format!("{SINGLE_SHOT_CONTEXT_PREFIX}{retrieved}{SINGLE_SHOT_QUESTION_INFIX}{question}")
}

/// Splits a single-shot user prompt back into (context, question).
pub fn parse_single_shot_user_prompt(prompt: &str) -> Option<(&str, &str)> {
    let body = prompt.strip_prefix(SINGLE_SHOT_CONTEXT_PREFIX)?;
    body.rsplit_once(SINGLE_SHOT_QUESTION_INFIX)
}

/// The three interpolated sections of an inner-loop user prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSections {
    pub retrieved: String,
    pub memory: String,
    pub question: String,
}

/// Renders the sections in the exemplar layout: each marker on its own
/// line, followed by its content. A section whose content contains a marker
/// is fenced with a run of `~` longer than any run inside the content.
pub fn render_loop_user_prompt(s: &LoopSections) -> String {
    let mut out = String::new();
    for (i, (marker, body)) in MARKERS
        .iter()
        .zip([&s.retrieved, &s.memory, &s.question])
        .enumerate()
    {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(marker);
        out.push('\n');
        out.push_str(&fence(body));
    }
    out
}

fn needs_fence(body: &str) -> bool {
    MARKERS.iter().any(|m| body.contains(m)) || body.lines().any(is_fence_line)
}

fn is_fence_line(line: &str) -> bool {
    line.len() >= 3 && line.chars().all(|c| c == '~')
}

fn fence(body: &str) -> String {
    if !needs_fence(body) {
        return body.to_string();
    }
    let longest = body
        .split(|c| c != '~')
        .map(str::len)
        .max()
        .unwrap_or(0);
    let bar = "~".repeat(longest.max(2) + 1);
    format!("{bar}\n{body}\n{bar}")
}

/// Inverse of [`render_loop_user_prompt`].
pub fn parse_loop_user_prompt(prompt: &str) -> Option<LoopSections> {
    let mut rest = prompt;
    let mut parts = Vec::with_capacity(3);
    for (i, marker) in MARKERS.iter().enumerate() {
        rest = rest.strip_prefix(marker)?.strip_prefix('\n')?;
        let next = MARKERS.get(i + 1).map(|m| format!("\n{m}\n"));
        let first_line = rest.split('\n').next().unwrap_or("");
        if is_fence_line(first_line) {
            let close = format!("\n{first_line}");
            let body_start = first_line.len() + 1;
            let after = rest.get(body_start..)?;
            let end = after.find(&close)?;
            let body = &after[..end];
            rest = &after[end + close.len()..];
            parts.push(body.to_string());
            if next.is_some() {
                rest = rest.strip_prefix('\n')?;
            }
        } else if let Some(next) = next {
            let end = rest.find(&next)?;
            parts.push(rest[..end].to_string());
            rest = &rest[end + 1..];
        } else {
            parts.push(rest.to_string());
            rest = "";
        }
    }
    if !rest.is_empty() {
        return None;
    }
    let question = parts.pop()?;
    let memory = parts.pop()?;
    let retrieved = parts.pop()?;
    Some(LoopSections {
        retrieved,
        memory,
        question,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exemplar_layout_matches_system_prompt() {
        let rendered = render_loop_user_prompt(&LoopSections {
            retrieved: "a2 = 1".into(),
            memory: "a1 = a2+a3".into(),
            question: "What is the value of a1".into(),
        });
        let expected = "(Retrieved Info):\na2 = 1\n(Memory):\na1 = a2+a3\n(Question):\nWhat is the value of a1";
        assert_eq!(rendered, expected);
        assert!(INNER_LOOP_SYSTEM.contains(&format!("{rendered}\n(Your Output):")));
    }

    #[test]
    fn marker_inside_question_is_fenced() {
        let s = LoopSections {
            retrieved: "x".into(),
            memory: String::new(),
            question: "what follows (Question): here?".into(),
        };
        let p = render_loop_user_prompt(&s);
        assert!(p.contains("~~~\nwhat follows"));
        assert_eq!(parse_loop_user_prompt(&p), Some(s));
    }

    #[test]
    fn single_shot_round_trip() {
        let p = single_shot_user_prompt("ctx", "q?");
        assert_eq!(p, "Given Context: ctx Give the best full answer to question q?");
        assert_eq!(parse_single_shot_user_prompt(&p), Some(("ctx", "q?")));
    }

    proptest! {
        #[test]
        fn sections_parse_back(
            retrieved in "(\\(Memory\\):|\\(Question\\):|~{3,5}|[a-z \n])*",
            memory in "(\\(Retrieved Info\\):|\\(Question\\):|~~~|[a-z \n])*",
            question in "(\\(Question\\):|[a-z ?\n])*",
        ) {
            let s = LoopSections { retrieved, memory, question };
            prop_assert_eq!(parse_loop_user_prompt(&render_loop_user_prompt(&s)), Some(s));
        }
    }
}
