//! Needle-in-a-haystack benchmarking: case generation, per-mode runs,
//! rubric scoring and CSV reports.

pub mod babilong;
pub mod filler;
pub mod niah;
pub mod suite;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::RunConfig;
use crate::gateway::mock::{ExtractiveChat, HashedBagEmbedder};
use crate::gateway::Backends;
use crate::index::RetrievalIndex;
use crate::inner_loop::{run_query, QueryMode};
use crate::tree::build_tree;

pub const RESULTS_HEADER: &str = "case_id,mode,tokens,depth,score,rounds,ms";
pub const GRID_HEADER: &str = "tokens,depth,mean_score";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("corpus has {have} tokens, need at least {need}")]
    CorpusTooShort { have: usize, need: usize },
    #[error("depth {0} is outside [0, 100]")]
    DepthOutOfRange(f64),
    #[error("at least one needle is required")]
    NoNeedles,
    #[error("needle must be exactly one sentence: {0:?}")]
    InvalidNeedle(String),
    #[error("suite: {0}")]
    Suite(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// One benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NiahCase {
    pub id: String,
    /// Haystack with the needles inserted.
    pub text: String,
    /// Token count of the filler window, needles excluded.
    pub haystack_tokens: usize,
    /// Requested haystack size; the grid key.
    pub target_tokens: usize,
    pub needles: Vec<String>,
    pub depth_percent: f64,
    /// Token offset of each needle in `text`.
    pub insertion_offsets: Vec<usize>,
    pub question: String,
    pub expected_keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchMode {
    /// Plain summaries (no surprise nodes), one retrieval, single-shot prompt.
    BaselineSingleShot,
    /// Dual summaries, one round.
    IlmtrNoLoop,
    /// Dual summaries and the full STM loop.
    IlmtrFull,
}

impl BenchMode {
    pub const ALL: [BenchMode; 3] = [
        BenchMode::BaselineSingleShot,
        BenchMode::IlmtrNoLoop,
        BenchMode::IlmtrFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::BaselineSingleShot => "baseline_single_shot",
            BenchMode::IlmtrNoLoop => "ilmtr_no_loop",
            BenchMode::IlmtrFull => "ilmtr_full",
        }
    }

    pub fn query_mode(self) -> QueryMode {
        match self {
            BenchMode::BaselineSingleShot => QueryMode::SingleShot,
            BenchMode::IlmtrNoLoop => QueryMode::NoLoop,
            BenchMode::IlmtrFull => QueryMode::Full,
        }
    }

    /// `config` adjusted for this mode.
    pub fn configure(self, config: &RunConfig) -> RunConfig {
        let mut c = config.clone();
        c.retriever.surprise_channel = self != BenchMode::BaselineSingleShot;
        c
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<QueryMode> for BenchMode {
    fn from(m: QueryMode) -> Self {
        match m {
            QueryMode::SingleShot => BenchMode::BaselineSingleShot,
            QueryMode::NoLoop => BenchMode::IlmtrNoLoop,
            QueryMode::Full => BenchMode::IlmtrFull,
        }
    }
}

impl FromStr for BenchMode {
    type Err = String;

    /// Accepts the report names and the CLI's `single`/`no-loop`/`full`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(m) = BenchMode::ALL.iter().find(|m| m.as_str() == s) {
            return Ok(*m);
        }
        s.parse::<QueryMode>().map(BenchMode::from)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub case_id: String,
    pub mode: BenchMode,
    pub tokens: usize,
    pub depth: f64,
    pub score: u8,
    pub rounds_used: usize,
    pub wall_time: Duration,
    pub error: Option<String>,
}

/// Rubric score for how many keywords the answer contains (substring match
/// after case folding). For three keywords: 0 -> 1, 1 -> 3, 2 -> 7,
/// 3 -> 10. For other counts, none -> 1 and all -> 10; a partial match
/// scores 3 in the lower half of the interior and 7 in the upper half.
pub fn score_niah(answer: &str, expected_keywords: &[String]) -> u8 {
    let answer = answer.to_lowercase();
    let n = expected_keywords.len();
    let m = expected_keywords
        .iter()
        .filter(|k| answer.contains(&k.to_lowercase()))
        .count();
    rubric(m, n)
}

/// Maps `m` of `n` matched keywords onto {1, 3, 7, 10}.
pub fn rubric(m: usize, n: usize) -> u8 {
    if n == 0 || m == 0 {
        return 1;
    }
    if m >= n {
        return 10;
    }
    if n == 2 {
        return 3;
    }
    // Interior position of m in 1..=n-1, in [0, 1].
    let t = (m - 1) as f64 / (n - 2) as f64;
    if t > 0.5 {
        7
    } else {
        3
    }
}

/// Makes the chat and embedding backends for one case.
pub type BackendFactory<'a> = dyn Fn(&NiahCase) -> Backends + Sync + 'a;

/// Extractive mock chat keyed on the configured patterns plus the case's
/// needles, with the hashed bag-of-words embedder.
pub fn mock_backends_for(case: &NiahCase, config: &RunConfig) -> Backends {
    let patterns = config
        .mock
        .needle_patterns
        .iter()
        .chain(&case.needles)
        .cloned()
        .collect::<Vec<_>>();
    Backends::new(ExtractiveChat::new(patterns), HashedBagEmbedder::default())
}

fn depth_key(depth: f64) -> f64 {
    (depth * 10.0).round() / 10.0
}

/// Builds a tree over the case, asks its question in `mode` and scores the
/// answer. Failures are recorded in the result.
pub fn run_case(case: &NiahCase, mode: BenchMode, config: &RunConfig, backends: &Backends) -> BenchResult {
    let start = Instant::now();
    let config = mode.configure(config);
    let mut result = BenchResult {
        case_id: case.id.clone(),
        mode,
        tokens: case.target_tokens,
        depth: depth_key(case.depth_percent),
        score: 1,
        rounds_used: 0,
        wall_time: Duration::ZERO,
        error: None,
    };
    match build_tree(&case.text, &config, backends) {
        Ok(tree) => {
            let index = RetrievalIndex::from_tree(tree);
            let trace = run_query(&index, &case.question, mode.query_mode(), &config, backends);
            result.rounds_used = trace.rounds.len();
            result.score = score_niah(&trace.final_answer, &case.expected_keywords);
            if let Some(e) = trace.error {
                result.error = Some(format!("round {}: {}", e.round, e.message));
            }
        }
        Err(e) => result.error = Some(format!("build: {e}")),
    }
    result.wall_time = start.elapsed();
    if let Some(e) = &result.error {
        warn!("case {} failed: {e}", case.id);
    } else {
        info!("case {} [{}]: score {}", case.id, mode, result.score);
    }
    result
}

/// Runs every case in `mode`, `parallel` cases at a time (1 = sequential).
/// Results keep the suite order.
pub fn run_bench(
    suite: &[NiahCase],
    mode: BenchMode,
    config: &RunConfig,
    factory: &BackendFactory<'_>,
    parallel: usize,
) -> Vec<BenchResult> {
    let one = |case: &NiahCase| run_case(case, mode, config, &factory(case));
    if parallel <= 1 {
        return suite.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
        Ok(pool) => pool.install(|| suite.par_iter().map(one).collect()),
        Err(e) => {
            warn!("could not start {parallel} workers ({e}); running sequentially");
            suite.iter().map(one).collect()
        }
    }
}

pub fn write_results_csv<W: Write>(mut w: W, results: &[BenchResult]) -> io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.case_id,
            r.mode,
            r.tokens,
            r.depth,
            r.score,
            r.rounds_used,
            r.wall_time.as_millis()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub tokens: usize,
    pub depth: f64,
    pub mean_score: f64,
    pub cases: usize,
}

/// Mean score per (tokens, depth), ordered by tokens then depth.
pub fn grid_rows(results: &[BenchResult]) -> Vec<GridRow> {
    let mut cells: BTreeMap<(usize, u64), (f64, f64, usize)> = BTreeMap::new();
    for r in results {
        // Depths are non-negative, so their bit patterns sort numerically.
        let e = cells
            .entry((r.tokens, r.depth.to_bits()))
            .or_insert((r.depth, 0.0, 0));
        e.1 += f64::from(r.score);
        e.2 += 1;
    }
    cells
        .into_iter()
        .map(|((tokens, _), (depth, sum, n))| GridRow {
            tokens,
            depth,
            mean_score: sum / n as f64,
            cases: n,
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(mut w: W, results: &[BenchResult]) -> io::Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    for row in grid_rows(results) {
        writeln!(w, "{},{},{:.2}", row.tokens, row.depth, row.mean_score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw() -> Vec<String> {
        vec!["figs".into(), "prosciutto".into(), "goat cheese".into()]
    }

    #[test]
    fn rubric_for_three_keywords() {
        assert_eq!(score_niah("nothing here", &kw()), 1);
        assert_eq!(score_niah("FIGS only", &kw()), 3);
        assert_eq!(score_niah("Figs and prosciutto", &kw()), 7);
        assert_eq!(score_niah("F, P, G: figs, prosciutto, goat cheese", &kw()), 10);
    }

    #[test]
    fn rubric_is_monotone_for_any_count() {
        for n in 1..12 {
            let scores: Vec<u8> = (0..=n).map(|m| rubric(m, n)).collect();
            assert!(scores.windows(2).all(|w| w[0] <= w[1]), "n={n}: {scores:?}");
            assert_eq!((scores[0], scores[n]), (1, 10));
            assert!(scores.iter().all(|s| [1, 3, 7, 10].contains(s)));
        }
    }

    #[test]
    fn mode_names() {
        for m in BenchMode::ALL {
            assert_eq!(m.as_str().parse::<BenchMode>(), Ok(m));
        }
        assert_eq!("no-loop".parse::<BenchMode>(), Ok(BenchMode::IlmtrNoLoop));
        assert!("loop".parse::<BenchMode>().is_err());
    }

    fn result(tokens: usize, depth: f64, score: u8) -> BenchResult {
        BenchResult {
            case_id: format!("c{tokens}-{depth}"),
            mode: BenchMode::IlmtrFull,
            tokens,
            depth,
            score,
            rounds_used: 2,
            wall_time: Duration::from_millis(5),
            error: None,
        }
    }

    #[test]
    fn grid_means_and_order() {
        let rs = vec![result(20, 50.0, 10), result(10, 50.0, 3), result(10, 0.0, 1), result(10, 50.0, 7)];
        let rows = grid_rows(&rs);
        let keys: Vec<(usize, f64, f64)> = rows.iter().map(|r| (r.tokens, r.depth, r.mean_score)).collect();
        assert_eq!(keys, vec![(10, 0.0, 1.0), (10, 50.0, 5.0), (20, 50.0, 10.0)]);
        let mut out = Vec::new();
        write_grid_csv(&mut out, &rs).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "tokens,depth,mean_score\n10,0,1.00\n10,50,5.00\n20,50,10.00\n"
        );
    }

    #[test]
    fn empty_suite_gives_header_only() {
        let f = |_: &NiahCase| -> Backends { unreachable!() };
        let rs = run_bench(&[], BenchMode::IlmtrFull, &RunConfig::default(), &f, 1);
        assert!(rs.is_empty());
        let mut out = Vec::new();
        write_results_csv(&mut out, &rs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{RESULTS_HEADER}\n"));
    }
}
