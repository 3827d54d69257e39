//! Suite files: TOML grids of cases.
//!
//! ```toml
//! [[grid]]
//! kind = "pizza"                 # pizza | niah | babilong
//! tokens = [10000, 20000]
//! depths = [0, 25, 50, 75, 100]  # pizza and niah only
//! samples = 1                    # seeds per cell: seed, seed + 1, ...
//! seed = 42
//! filler = "adversarial"         # synthetic | adversarial | path to a text file
//!
//! [[grid]]
//! kind = "babilong"
//! task = "qa3"
//! tokens = [10000]
//! sample_example = true
//! ```
//!
//! `kind = "niah"` takes `needles`, `question` and `keywords`. An empty
//! file is an empty suite.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::babilong::{generate_chain, sample_qa3_chain, scatter_chain, BabiTask};
use super::filler::{adversarial_filler, synthetic_filler};
use super::niah::{generate_niah_case, pizza_case};
use super::{BenchError, NiahCase};

fn default_tokens() -> Vec<usize> {
    vec![10_000, 20_000, 50_000]
}

fn default_depths() -> Vec<f64> {
    vec![0.0, 25.0, 50.0, 75.0, 100.0]
}

fn default_filler() -> String {
    "synthetic".into()
}

fn default_samples() -> usize {
    1
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Pizza,
    Niah,
    Babilong,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub kind: GridKind,
    #[serde(default = "default_tokens")]
    pub tokens: Vec<usize>,
    #[serde(default = "default_depths")]
    pub depths: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_filler")]
    pub filler: String,
    #[serde(default)]
    pub needles: Vec<String>,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub facts: Option<usize>,
    #[serde(default)]
    pub sample_example: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub grid: Vec<Grid>,
    /// Directory that relative filler paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Suite {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Suite(e.message().to_string()))
    }

    fn filler(&self, name: &str) -> Result<String, BenchError> {
        Ok(match name {
            "synthetic" => synthetic_filler().to_string(),
            "adversarial" => adversarial_filler().to_string(),
            path => {
                let p = Path::new(path);
                let p = match &self.base_dir {
                    Some(base) if p.is_relative() => base.join(p),
                    _ => p.to_path_buf(),
                };
                fs::read_to_string(&p)
                    .map_err(|e| BenchError::Suite(format!("filler {}: {e}", p.display())))?
            }
        })
    }

    /// Expands every grid into cases: tokens, then depth, then sample.
    pub fn cases(&self) -> Result<Vec<NiahCase>, BenchError> {
        let mut out = Vec::new();
        for g in &self.grid {
            let filler = self.filler(&g.filler)?;
            let seeds = (0..g.samples as u64).map(|i| g.seed.wrapping_add(i));
            match g.kind {
                GridKind::Pizza | GridKind::Niah => {
                    for &t in &g.tokens {
                        for &d in &g.depths {
                            for s in seeds.clone() {
                                out.push(if g.kind == GridKind::Pizza {
                                    pizza_case(&filler, d, t, s)?
                                } else {
                                    let mut c = generate_niah_case(
                                        &filler, &g.needles, d, t, s, &g.question, &g.keywords,
                                    )?;
                                    if g.keywords.is_empty() {
                                        return Err(BenchError::Suite(
                                            "niah grid needs keywords".into(),
                                        ));
                                    }
                                    c.id = format!("niah-t{t}-d{d}-s{s}");
                                    c
                                });
                            }
                        }
                    }
                }
                GridKind::Babilong => {
                    let task: BabiTask = g
                        .task
                        .as_deref()
                        .ok_or_else(|| BenchError::Suite("babilong grid needs a task".into()))?
                        .parse()?;
                    if g.sample_example && task != BabiTask::Qa3 {
                        return Err(BenchError::Suite("sample_example needs task qa3".into()));
                    }
                    for &t in &g.tokens {
                        for s in seeds.clone() {
                            let chain = if g.sample_example {
                                sample_qa3_chain()
                            } else {
                                generate_chain(task, g.facts.unwrap_or(task.default_facts()), s)?
                            };
                            let mut c = scatter_chain(&chain, &filler, t, s)?;
                            c.id = format!("babilong-{task}-t{t}-s{s}");
                            out.push(c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn load_suite(path: &Path) -> Result<Suite, BenchError> {
    let text = fs::read_to_string(path)?;
    let mut suite = Suite::from_toml_str(&text)?;
    suite.base_dir = path.parent().map(Path::to_path_buf);
    Ok(suite)
}
