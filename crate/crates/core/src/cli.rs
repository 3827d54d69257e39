//! Command-line front end: `build`, `query`, `bench` and `inspect`.
//!
//! Exit codes: 0 ok, 1 usage, 2 input, 3 output, 4 backend.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::bench::suite::load_suite;
use crate::bench::{
    mock_backends_for, run_bench, write_grid_csv, write_results_csv, BenchMode,
    NiahCase,
};
use crate::config::{load_config, ConfigError, RunConfig};
use crate::gateway::http::{OpenAiEmbedder, RoutedChat};
use crate::gateway::mock::{ExtractiveChat, HashedBagEmbedder, ScriptedChat};
use crate::gateway::{Backends, EmbeddingBackend};
use crate::index::{load_index, save_index, RetrievalIndex};
use crate::inner_loop::{run_query, LoopTrace, QueryMode};
use crate::tree::{build_tree, BuildError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_OUTPUT: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ilmtr", version, about = "Summary-tree retrieval with an inner query loop")]
pub struct Cli {
    /// Config file (TOML). Unset fields take their defaults.
    #[arg(long, global = true, env = "ILMTR_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set loop.max_rounds=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Use deterministic offline backends instead of the configured endpoints.
    #[arg(long, global = true)]
    pub mock: bool,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a summary tree over a text file and write the index.
    Build(BuildArgs),
    /// Answer a question from an index.
    Query(QueryArgs),
    /// Run a benchmark suite and write result tables.
    Bench(BenchArgs),
    /// Print an index overview or one node.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub question: String,
    /// single, no-loop or full.
    #[arg(long, default_value = "full", value_parser = parse_query_mode)]
    pub mode: QueryMode,
    /// Print every round's memory text and convergence ratio.
    #[arg(long)]
    pub trace: bool,
    /// JSON array of strings replayed as the chat model's replies.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub suite: PathBuf,
    /// single, no-loop or full (or baseline_single_shot, ilmtr_no_loop,
    /// ilmtr_full).
    #[arg(long, default_value = "full", value_parser = parse_bench_mode)]
    pub mode: BenchMode,
    /// Directory for results.csv and grid.csv; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Cases to run at once.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Node id to dump; omit for an overview.
    #[arg(long)]
    pub node: Option<usize>,
}

fn parse_query_mode(s: &str) -> Result<QueryMode, String> {
    s.parse()
}

fn parse_bench_mode(s: &str) -> Result<BenchMode, String> {
    s.parse()
}

/// A failure with its exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn usage(m: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, m)
    }

    fn input(m: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, m)
    }

    fn output(m: impl Into<String>) -> Self {
        Self::new(EXIT_OUTPUT, m)
    }

    fn backend(m: impl Into<String>) -> Self {
        Self::new(EXIT_BACKEND, m)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::BadOverride(_) => CliError::usage(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

/// Where command output goes, plus optional backends that replace whatever
/// the flags would select (used by tests).
pub struct Session<'a> {
    pub out: &'a mut dyn Write,
    pub backends: Option<Backends>,
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::output(format!("writing output: {e}")))
}

fn read_script(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("script {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("script {} is not a JSON string array: {e}", path.display())))
}

fn embedder(cli: &Cli, config: &RunConfig) -> Box<dyn EmbeddingBackend> {
    if cli.mock {
        Box::new(HashedBagEmbedder::default())
    } else {
        Box::new(OpenAiEmbedder::from_config(config))
    }
}

fn select_backends(
    cli: &Cli,
    config: &RunConfig,
    script: Option<&Path>,
    session: &Session<'_>,
) -> Result<Backends, CliError> {
    if let Some(b) = &session.backends {
        return Ok(b.clone());
    }
    let embed: std::sync::Arc<dyn EmbeddingBackend> = embedder(cli, config).into();
    let chat: std::sync::Arc<dyn crate::gateway::ChatBackend> = if let Some(p) = script {
        std::sync::Arc::new(ScriptedChat::new(read_script(p)?))
    } else if cli.mock {
        std::sync::Arc::new(ExtractiveChat::new(&config.mock.needle_patterns))
    } else {
        std::sync::Arc::new(RoutedChat::from_config(config))
    };
    Ok(Backends { chat, embed })
}

fn open_index(path: &Path) -> Result<RetrievalIndex, CliError> {
    load_index(path).map_err(|e| CliError::input(format!("index {}: {e}", path.display())))
}

fn cmd_build(cli: &Cli, args: &BuildArgs, config: &RunConfig, s: &mut Session<'_>) -> Result<(), CliError> {
    let raw = fs::read_to_string(&args.input)
        .map_err(|e| CliError::input(format!("input {}: {e}", args.input.display())))?;
    let backends = select_backends(cli, config, None, s)?;
    let tree = build_tree(&raw, config, &backends).map_err(|e| match e {
        BuildError::EmptyInput => CliError::input(e.to_string()),
        _ => CliError::backend(e.to_string()),
    })?;
    let index = RetrievalIndex::from_tree(tree);
    save_index(&index, &args.index)
        .map_err(|e| CliError::output(format!("index {}: {e}", args.index.display())))?;
    let tree = index.tree();
    write_out(
        s.out,
        &format!(
            "layers: {:?}\nsurprise_nodes: {}\nindex: {}\n",
            tree.layer_sizes(),
            tree.surprise_count(),
            args.index.display()
        ),
    )
}

fn format_trace(trace: &LoopTrace) -> String {
    let mut out = String::new();
    for r in &trace.rounds {
        let ids: Vec<String> = r.retrieved_ids.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "[round {}] ratio={:.4} nodes={}\n{}\n",
            r.round,
            r.convergence_ratio,
            ids.join(","),
            r.stm_text
        ));
    }
    out.push_str(&format!("converged: {}\n", trace.converged));
    out
}

fn cmd_query(cli: &Cli, args: &QueryArgs, config: &RunConfig, s: &mut Session<'_>) -> Result<(), CliError> {
    let index = open_index(&args.index)?;
    let backends = select_backends(cli, config, args.script.as_deref(), s)?;
    let trace = run_query(&index, &args.question, args.mode, config, &backends);
    if args.trace {
        write_out(s.out, &format_trace(&trace))?;
    }
    if let Some(f) = &trace.error {
        return Err(CliError::backend(format!("round {}: {}", f.round, f.message)));
    }
    write_out(s.out, &format!("{}\n", trace.final_answer))
}

fn cmd_bench(cli: &Cli, args: &BenchArgs, config: &RunConfig, s: &mut Session<'_>) -> Result<(), CliError> {
    let suite = load_suite(&args.suite)
        .map_err(|e| CliError::input(format!("suite {}: {e}", args.suite.display())))?;
    let cases = suite.cases().map_err(|e| CliError::input(e.to_string()))?;
    if args.out.exists() && !args.out.is_dir() {
        return Err(CliError::output(format!("{} is not a directory", args.out.display())));
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::output(format!("{}: {e}", args.out.display())))?;

    let fixed = match &s.backends {
        Some(b) => Some(b.clone()),
        None if !cli.mock => Some(Backends {
            chat: std::sync::Arc::new(RoutedChat::from_config(config)),
            embed: std::sync::Arc::new(OpenAiEmbedder::from_config(config)),
        }),
        None => None,
    };
    let factory = |case: &NiahCase| match &fixed {
        Some(b) => b.clone(),
        None => mock_backends_for(case, config),
    };
    let results = run_bench(&cases, args.mode, config, &factory, args.parallel);

    let write = |name: &str, f: &dyn Fn(&mut fs::File) -> std::io::Result<()>| {
        let path = args.out.join(name);
        fs::File::create(&path)
            .and_then(|mut file| f(&mut file))
            .map_err(|e| CliError::output(format!("{}: {e}", path.display())))
    };
    write("results.csv", &|f| write_results_csv(f, &results))?;
    write("grid.csv", &|f| write_grid_csv(f, &results))?;
    let mut grid = Vec::new();
    write_grid_csv(&mut grid, &results).expect("writing to memory");
    write_out(s.out, &String::from_utf8_lossy(&grid))?;

    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::backend(format!("{failed} of {} cases failed", results.len())));
    }
    Ok(())
}

fn cmd_inspect(args: &InspectArgs, s: &mut Session<'_>) -> Result<(), CliError> {
    let index = open_index(&args.index)?;
    let tree = index.tree();
    let text = match args.node {
        None => format!(
            "nodes: {}\ndim: {}\nlayers: {:?}\nsurprise: {:?}\nseed: {}\ncorpus: {}\n",
            tree.nodes.len(),
            index.dim(),
            tree.layer_sizes(),
            tree.surprise_sizes(),
            tree.meta.seed,
            tree.meta.corpus_digest
        ),
        Some(id) => {
            let n = tree
                .node(id)
                .ok_or_else(|| CliError::input(format!("no node {id} (index has {})", tree.nodes.len())))?;
            let children: Vec<String> = n.children.iter().map(usize::to_string).collect();
            format!(
                "id: {}\nlevel: {}\nkind: {}\nchildren: {}\nsibling: {}\ntokens: {}\ntext:\n{}\n",
                n.id,
                n.level,
                n.kind.as_str(),
                if children.is_empty() { "-".into() } else { children.join(",") },
                n.sibling.map(|x| x.to_string()).unwrap_or_else(|| "-".into()),
                n.token_count,
                n.text
            )
        }
    };
    write_out(s.out, &text)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, session: &mut Session<'_>) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Build(a) => cmd_build(cli, a, &config, session),
        Command::Query(a) => cmd_query(cli, a, &config, session),
        Command::Bench(a) => cmd_bench(cli, a, &config, session),
        Command::Inspect(a) => cmd_inspect(a, session),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args`, runs the command and returns the exit code. Diagnostics
/// go to stderr.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_logging(cli.verbose);
    let mut session = Session { out, backends: None };
    match run(&cli, &mut session) {
        Ok(()) => {
            info!("done");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
