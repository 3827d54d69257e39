//! Multi-needle cases: a window of filler sentences with needle sentences
//! inserted at sentence boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchError, NiahCase};
use crate::chunker::{count_tokens, split_sentences};

pub const PIZZA_NEEDLES: [&str; 3] = [
    "Figs are one of the secret ingredients needed to build the perfect pizza.",
    "Prosciutto is one of the secret ingredients needed to build the perfect pizza.",
    "Goat cheese is one of the secret ingredients needed to build the perfect pizza.",
];
pub const PIZZA_QUESTION: &str =
    "What is the first letter of each secret ingredient needed to build the perfect pizza?";
pub const PIZZA_KEYWORDS: [&str; 3] = ["Figs", "Prosciutto", "Goat cheese"];

/// A run of whole filler sentences and their token offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Haystack {
    pub sentences: Vec<String>,
    /// `starts[i]` is the token offset of sentence `i`; `starts[len]` is the
    /// total.
    pub starts: Vec<usize>,
}

impl Haystack {
    pub fn tokens(&self) -> usize {
        *self.starts.last().expect("starts is never empty")
    }

    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

/// The longest run of whole sentences with at most `target_tokens` tokens,
/// starting at a seeded sentence among those that leave enough text.
pub fn haystack_window(corpus: &str, target_tokens: usize, seed: u64) -> Result<Haystack, BenchError> {
    let sentences = split_sentences(corpus);
    let counts: Vec<usize> = sentences.iter().map(|s| count_tokens(s)).collect();
    let total: usize = counts.iter().sum();
    if total < target_tokens || target_tokens == 0 {
        return Err(BenchError::CorpusTooShort {
            have: total,
            need: target_tokens,
        });
    }
    // Start candidates: every sentence with at least `target_tokens` after it.
    let mut remaining = total;
    let mut candidates = 0;
    for c in &counts {
        if remaining < target_tokens {
            break;
        }
        candidates += 1;
        remaining -= c;
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..candidates);
    let mut starts = vec![0];
    let mut out = Vec::new();
    for (s, c) in sentences.into_iter().zip(counts).skip(start) {
        let next = starts.last().unwrap() + c;
        if next > target_tokens {
            break;
        }
        starts.push(next);
        out.push(s);
    }
    if out.is_empty() {
        return Err(BenchError::CorpusTooShort {
            have: 0,
            need: target_tokens,
        });
    }
    Ok(Haystack {
        sentences: out,
        starts,
    })
}

pub(crate) fn check_needles(needles: &[String]) -> Result<(), BenchError> {
    if needles.is_empty() {
        return Err(BenchError::NoNeedles);
    }
    for n in needles {
        let parts = split_sentences(n);
        if parts.len() != 1 || parts[0] != *n {
            return Err(BenchError::InvalidNeedle(n.clone()));
        }
    }
    Ok(())
}

/// Token offsets the needles would get if needle `j` went before sentence
/// `boundaries[j]` (boundaries non-decreasing, at most the sentence count).
pub fn needle_offsets(hay: &Haystack, needle_tokens: &[usize], boundaries: &[usize]) -> Vec<usize> {
    let mut shift = 0;
    boundaries
        .iter()
        .zip(needle_tokens)
        .map(|(&b, &len)| {
            let at = hay.starts[b] + shift;
            shift += len;
            at
        })
        .collect()
}

/// Final text with needle `j` placed before sentence `boundaries[j]`.
pub fn insert_needles(hay: &Haystack, needles: &[String], boundaries: &[usize]) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(hay.sentences.len() + needles.len());
    let mut next = 0;
    for (i, s) in hay.sentences.iter().enumerate() {
        while next < needles.len() && boundaries[next] == i {
            parts.push(&needles[next]);
            next += 1;
        }
        parts.push(s);
    }
    parts.extend(needles[next..].iter().map(String::as_str));
    parts.join(" ")
}

fn mean(xs: &[usize]) -> f64 {
    xs.iter().sum::<usize>() as f64 / xs.len() as f64
}

/// Builds a case with the needles at consecutive sentence boundaries, the
/// run chosen so the mean needle offset is as close as possible to
/// `depth_percent` of the haystack.
pub fn generate_niah_case(
    corpus: &str,
    needles: &[String],
    depth_percent: f64,
    target_tokens: usize,
    seed: u64,
    question: &str,
    expected_keywords: &[String],
) -> Result<NiahCase, BenchError> {
    if !(0.0..=100.0).contains(&depth_percent) {
        return Err(BenchError::DepthOutOfRange(depth_percent));
    }
    check_needles(needles)?;
    let hay = haystack_window(corpus, target_tokens, seed)?;
    let lens: Vec<usize> = needles.iter().map(|n| count_tokens(n)).collect();
    let m = hay.sentences.len();
    let k = needles.len();
    let target = depth_percent / 100.0 * hay.tokens() as f64;
    let runs = |i: usize| -> Vec<usize> { (0..k).map(|j| (i + j).min(m)).collect() };
    let last_start = (m + 1).saturating_sub(k);
    let best = (0..=last_start)
        .map(|i| {
            let offs = needle_offsets(&hay, &lens, &runs(i));
            (i, (mean(&offs) - target).abs())
        })
        .fold((0, f64::INFINITY), |acc, (i, e)| if e < acc.1 { (i, e) } else { acc })
        .0;
    let boundaries = runs(best);
    Ok(NiahCase {
        id: format!("niah-t{target_tokens}-d{depth_percent}-s{seed}"),
        text: insert_needles(&hay, needles, &boundaries),
        haystack_tokens: hay.tokens(),
        target_tokens,
        needles: needles.to_vec(),
        depth_percent,
        insertion_offsets: needle_offsets(&hay, &lens, &boundaries),
        question: question.to_string(),
        expected_keywords: expected_keywords.to_vec(),
    })
}

/// The three pizza needles and their question.
pub fn pizza_case(corpus: &str, depth_percent: f64, target_tokens: usize, seed: u64) -> Result<NiahCase, BenchError> {
    let needles: Vec<String> = PIZZA_NEEDLES.iter().map(|s| s.to_string()).collect();
    let keywords: Vec<String> = PIZZA_KEYWORDS.iter().map(|s| s.to_string()).collect();
    let mut case = generate_niah_case(
        corpus,
        &needles,
        depth_percent,
        target_tokens,
        seed,
        PIZZA_QUESTION,
        &keywords,
    )?;
    case.id = format!("pizza-t{target_tokens}-d{depth_percent}-s{seed}");
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::filler::synthetic_filler;

    #[test]
    fn depth_zero_puts_needles_first() {
        let c = pizza_case(synthetic_filler(), 0.0, 2000, 1).unwrap();
        assert_eq!(c.insertion_offsets[0], 0);
        assert!(c.text.starts_with(PIZZA_NEEDLES[0]));
    }

    #[test]
    fn depth_fifty_lands_mid_haystack() {
        let c = pizza_case(synthetic_filler(), 50.0, 1000, 3).unwrap();
        let m = mean(&c.insertion_offsets);
        assert!((480.0..=520.0).contains(&m), "mean offset {m}");
    }

    #[test]
    fn offsets_point_at_needles() {
        let c = pizza_case(synthetic_filler(), 75.0, 3000, 9).unwrap();
        let spans = crate::chunker::WordPunctCounter;
        let tokens = crate::chunker::TokenCounter::spans(&spans, &c.text);
        for (n, &off) in c.needles.iter().zip(&c.insertion_offsets) {
            let first = &c.text[tokens[off].clone()];
            assert_eq!(first, n.split_whitespace().next().unwrap());
        }
        assert!(c.insertion_offsets.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pizza_case("Too short.", 50.0, 1000, 0),
            Err(BenchError::CorpusTooShort { .. })
        ));
        assert!(matches!(
            pizza_case(synthetic_filler(), 101.0, 1000, 0),
            Err(BenchError::DepthOutOfRange(_))
        ));
        let two = vec!["One. Two.".to_string()];
        assert!(matches!(
            generate_niah_case(synthetic_filler(), &two, 10.0, 500, 0, "q", &[]),
            Err(BenchError::InvalidNeedle(_))
        ));
        assert!(matches!(
            generate_niah_case(synthetic_filler(), &[], 10.0, 500, 0, "q", &[]),
            Err(BenchError::NoNeedles)
        ));
    }
}
