//! Sentence splitting, token counting and greedy chunk packing.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

const ABBREVIATIONS: &str = include_str!("abbreviations.txt");

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Counts tokens and reports where they are, so text can be cut on token
/// boundaries. Swap in a model tokenizer by implementing this trait.
pub trait TokenCounter: Send + Sync {
    /// Byte ranges of the tokens of `text`, in order.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// A token is a maximal run of alphanumeric characters or a single
/// punctuation/symbol character. Whitespace separates tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunctCounter;

impl TokenCounter for WordPunctCounter {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                word_start.get_or_insert(i);
                continue;
            }
            if let Some(s) = word_start.take() {
                out.push(s..i);
            }
            if !c.is_whitespace() {
                out.push(i..i + c.len_utf8());
            }
        }
        if let Some(s) = word_start {
            out.push(s..text.len());
        }
        out
    }

    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_word = false;
        for c in text.chars() {
            if c.is_alphanumeric() {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Token count under the default counter.
pub fn count_tokens(text: &str) -> usize {
    WordPunctCounter.count(text)
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{2019}' | '\u{201D}')
}

/// The word ending right before byte `dot`, lowercased, without leading
/// punctuation. Internal periods are kept so "e.g" and "a.m" match.
fn word_before(text: &str, dot: usize) -> String {
    let head = &text[..dot];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    head[start..]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Splits text into sentences at `.`, `!` or `?` (plus any closing quotes or
/// brackets) followed by whitespace or end of input. A period after a word
/// on the abbreviation list does not end a sentence. Sentences are trimmed.
pub fn split_sentences(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = raw.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminal(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let at_end = j == chars.len();
        if !at_end && !chars[j].1.is_whitespace() {
            i = j;
            continue;
        }
        if c == '.' && j == i + 1 && abbreviations().contains(word_before(raw, pos).as_str()) {
            i = j;
            continue;
        }
        let end = if at_end { raw.len() } else { chars[j].0 };
        push_trimmed(&mut out, &raw[start..end]);
        start = end;
        i = j;
    }
    push_trimmed(&mut out, &raw[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    /// First and last sentence ordinals covered (inclusive).
    pub sentence_span: (usize, usize),
    /// Set on pieces of a single sentence that alone exceeded the limit.
    pub oversize: bool,
}

/// Greedy packing with the default token counter.
pub fn chunk_text(raw: &str, max_tokens: usize) -> Vec<Chunk> {
    chunk_text_with(raw, max_tokens, &WordPunctCounter)
}

/// Packs sentences in order; a sentence that would overflow the current chunk
/// starts the next one. A sentence longer than `max_tokens` on its own is cut
/// at token boundaries into pieces flagged `oversize`.
pub fn chunk_text_with(raw: &str, max_tokens: usize, counter: &dyn TokenCounter) -> Vec<Chunk> {
    assert!(max_tokens >= 1, "max_tokens must be at least 1");
    let sentences = split_sentences(raw);
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_tokens = 0usize;
    let mut first = 0usize;

    fn flush(
        chunks: &mut Vec<Chunk>,
        current: &mut Vec<&str>,
        tokens: &mut usize,
        first: usize,
        last: usize,
    ) {
        if current.is_empty() {
            return;
        }
        chunks.push(Chunk {
            index: chunks.len(),
            text: current.join(" "),
            token_count: *tokens,
            sentence_span: (first, last),
            oversize: false,
        });
        current.clear();
        *tokens = 0;
    }

    for (si, sentence) in sentences.iter().enumerate() {
        let spans = counter.spans(sentence);
        let n = spans.len();
        if n > max_tokens {
            flush(&mut chunks, &mut current, &mut current_tokens, first, si.saturating_sub(1));
            for piece in spans.chunks(max_tokens) {
                let start = piece[0].start;
                let end = piece[piece.len() - 1].end;
                chunks.push(Chunk {
                    index: chunks.len(),
                    text: sentence[start..end].to_string(),
                    token_count: piece.len(),
                    sentence_span: (si, si),
                    oversize: true,
                });
            }
            first = si + 1;
            continue;
        }
        if current_tokens + n > max_tokens {
            flush(&mut chunks, &mut current, &mut current_tokens, first, si - 1);
        }
        if current.is_empty() {
            first = si;
        }
        current.push(sentence);
        current_tokens += n;
    }
    let last = sentences.len().saturating_sub(1);
    flush(&mut chunks, &mut current, &mut current_tokens, first, last);
    chunks
}

/// Keeps the leading tokens of `text` that fit in `max_tokens`.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let spans = WordPunctCounter.spans(text);
    if spans.len() <= max_tokens {
        return text;
    }
    if max_tokens == 0 {
        return "";
    }
    &text[..spans[max_tokens - 1].end]
}
