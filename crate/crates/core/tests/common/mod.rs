#![allow(dead_code)]

use ilmtr::gateway::mock::{ExtractiveChat, HashedBagEmbedder};
use ilmtr::Backends;

/// The five inner-loop outputs of the published qa3 walk-through.
pub const QA3_ROUNDS: [&str; 5] = [
    "The apple was at office. We need to find where the apple was before the office.",
    "The apple was at office. Mary put down the apple at office. We need to determine where Mary was before she placed the apple down.",
    "The apple was at office. Mary put down the apple at office, but before that, she was in the kitchen.",
    "Mary put down the apple at office, but before that, she was in the kitchen. The best answer to the question \"Where was the apple before the office?\" is:\n\nThe kitchen.",
    "Based on the given context, the best answer to the question \"Where was the apple before the office?\" is:\n\nThe kitchen.",
];

pub const QA3_QUESTION: &str = "Where was the apple before the office?";

pub const NEEDLE: &str = "Figs are one of the secret ingredients needed to build the perfect pizza.";

const SEA: [&str; 10] = [
    "harbor", "tide", "anchor", "sailor", "lighthouse", "wave", "gull", "net", "dock", "current",
];
const FOREST: [&str; 10] = [
    "oak", "moss", "fern", "owl", "trail", "pine", "root", "badger", "canopy", "acorn",
];

/// Eleven tokens: ten words and a period.
fn sentence(vocab: &[&str; 10], i: usize) -> String {
    let words: Vec<&str> = (0..10).map(|j| vocab[(i * 3 + j * 7) % 10]).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// Twelve blocks of 594 tokens alternating between two vocabularies, so
/// 600-token chunks fall on block boundaries. Block 4 carries [`NEEDLE`].
pub fn two_topic_document() -> String {
    let mut out = Vec::new();
    for block in 0..12 {
        let vocab = if block % 2 == 0 { &SEA } else { &FOREST };
        for i in 0..54 {
            if block == 4 && i == 20 {
                out.push(NEEDLE.to_string());
            } else {
                out.push(sentence(vocab, block * 54 + i));
            }
        }
    }
    out.join(" ")
}

pub fn mock_backends() -> Backends {
    Backends::new(ExtractiveChat::new(["secret ingredient"]), HashedBagEmbedder::default())
}

/// Exponential-time LCS straight from the recurrence.
pub fn lcs_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a.split_first(), b.split_first()) {
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                1 + lcs_recursive(ra, rb)
            } else {
                lcs_recursive(ra, b).max(lcs_recursive(a, rb))
            }
        }
        _ => 0,
    }
}

/// Full cosine sort: every node scored from raw vectors, best first, ties
/// by lower id.
pub fn brute_force_rank(vectors: &[Vec<f64>], query: &[f64]) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

/// Greedy prefix of a ranking under a hit cap and a token budget.
pub fn brute_force_take(
    ranked: &[(usize, f64)],
    tokens: &[usize],
    top_k: usize,
    budget: usize,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut used = 0;
    for &(id, score) in ranked {
        if out.len() == top_k || used + tokens[id] > budget {
            break;
        }
        used += tokens[id];
        out.push((id, score));
    }
    out
}
