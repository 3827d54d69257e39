mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use clap::Parser;
use ilmtr::cli::{run, Cli, Session, EXIT_BACKEND, EXIT_INPUT, EXIT_OK, EXIT_OUTPUT, EXIT_USAGE};
use ilmtr::gateway::mock::{HashedBagEmbedder, ScriptedChat};
use ilmtr::gateway::{Backends, ChatBackend, EmbeddingBackend};

use common::{two_topic_document, QA3_QUESTION, QA3_ROUNDS};

fn ilmtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilmtr"))
        .args(args)
        .env_remove("ILMTR_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn build_two_topic(dir: &Path) -> String {
    let input = dir.join("doc.txt");
    fs::write(&input, two_topic_document()).unwrap();
    let index = dir.join("doc.idx");
    let out = ilmtr(&["--mock", "build", "--input", path_str(&input), "--index", path_str(&index)]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("layers: [12, 12, 2, 1]"), "{text}");
    assert!(text.contains("surprise_nodes: 1"), "{text}");
    path_str(&index).to_string()
}

#[test]
fn build_then_query_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let index = build_two_topic(dir.path());

    let out = ilmtr(&[
        "--mock",
        "query",
        "--index",
        &index,
        "--question",
        "Which secret ingredient builds the perfect pizza?",
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(stdout(&out).contains("Figs"));

    let out = ilmtr(&["inspect", "--index", &index]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let out = ilmtr(&["inspect", "--index", &index, "--node", "0"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(stdout(&out).contains("level"));
    let out = ilmtr(&["inspect", "--index", &index, "--node", "9999"]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}

#[test]
fn build_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let index = dir.path().join("x.idx");
    let out = ilmtr(&["--mock", "build", "--input", path_str(&missing), "--index", path_str(&index)]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));

    let input = dir.path().join("doc.txt");
    fs::write(&input, "A short document. It has two sentences.").unwrap();
    let unwritable = dir.path().join("no-such-dir").join("x.idx");
    let out = ilmtr(&["--mock", "build", "--input", path_str(&input), "--index", path_str(&unwritable)]);
    assert_eq!(out.status.code(), Some(EXIT_OUTPUT));

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "  \n").unwrap();
    let out = ilmtr(&["--mock", "build", "--input", path_str(&empty), "--index", path_str(&index)]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));

    let build = |set: &str| {
        ilmtr(&["--mock", "--set", set, "build", "--input", path_str(&input), "--index", path_str(&index)])
            .status
            .code()
    };
    assert_eq!(build("max_rounds"), Some(EXIT_USAGE));
    assert_eq!(build("loop.nope=1"), Some(EXIT_INPUT));
    assert_eq!(build("loop.max_rounds=0"), Some(EXIT_INPUT));

    let out = ilmtr(&[
        "--set",
        "embedding.url=http://127.0.0.1:9",
        "--set",
        "http.retries=0",
        "build",
        "--input",
        path_str(&input),
        "--index",
        path_str(&index),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_BACKEND));
}

#[test]
fn qa3_replay_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("facts.txt");
    let facts = ilmtr::bench::babilong::sample_qa3_chain().facts.join(" ");
    fs::write(&input, facts).unwrap();
    let index = dir.path().join("facts.idx");
    let out = ilmtr(&["--mock", "build", "--input", path_str(&input), "--index", path_str(&index)]);
    assert_eq!(out.status.code(), Some(EXIT_OK));

    let script = dir.path().join("script.json");
    fs::write(&script, serde_json::to_string(&QA3_ROUNDS).unwrap()).unwrap();
    let out = ilmtr(&[
        "--mock",
        "query",
        "--index",
        path_str(&index),
        "--question",
        QA3_QUESTION,
        "--trace",
        "--script",
        path_str(&script),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for r in 1..=5 {
        assert!(text.contains(&format!("[round {r}]")), "{text}");
    }
    assert!(text.contains("converged: false"));
    assert!(text.trim_end().lines().last().unwrap().contains("kitchen"));
}

#[test]
fn exhausted_script_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("doc.txt");
    fs::write(&input, "Mary moved to the kitchen. John went to the garden.").unwrap();
    let index = dir.path().join("doc.idx");
    assert_eq!(
        ilmtr(&["--mock", "build", "--input", path_str(&input), "--index", path_str(&index)]).status.code(),
        Some(EXIT_OK)
    );
    let script = dir.path().join("script.json");
    fs::write(&script, r#"["first", "second"]"#).unwrap();
    let out = ilmtr(&[
        "--mock",
        "query",
        "--index",
        path_str(&index),
        "--question",
        "Where is Mary?",
        "--trace",
        "--script",
        path_str(&script),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_BACKEND));
    assert!(String::from_utf8_lossy(&out.stderr).contains("round 3"));
}

#[test]
fn single_mode_calls_the_model_once() {
    let dir = tempfile::tempdir().unwrap();
    let index = build_two_topic(dir.path());
    let chat = Arc::new(ScriptedChat::new(["one", "two", "three"]));
    let backends = Backends {
        chat: chat.clone() as Arc<dyn ChatBackend>,
        embed: Arc::new(HashedBagEmbedder::default()) as Arc<dyn EmbeddingBackend>,
    };
    let cli = Cli::parse_from(["ilmtr", "query", "--index", &index, "--question", "anything?", "--mode", "single"]);
    let mut buf = Vec::new();
    let mut session = Session {
        out: &mut buf,
        backends: Some(backends),
    };
    run(&cli, &mut session).unwrap();
    assert_eq!(chat.call_count(), 1);
    assert_eq!(String::from_utf8(buf).unwrap().trim(), "one");
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let out = ilmtr(&["query", "--index", "x.idx", "--question", "q", "--mode", "loop"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert_eq!(ilmtr(&["--help"]).status.code(), Some(EXIT_OK));
    assert_eq!(ilmtr(&["frobnicate"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    fs::write(
        &suite,
        "[[grid]]\nkind = \"pizza\"\ntokens = [3000]\nfiller = \"adversarial\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = ilmtr(&[
        "--mock",
        "bench",
        "--suite",
        path_str(&suite),
        "--mode",
        "ilmtr_full",
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = fs::read_to_string(out_dir.join("grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "tokens,depth,mean_score");
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.ends_with(",10.00")), "{grid}");
    let results = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 6);
    assert!(results.starts_with("case_id,mode,tokens,depth,score,rounds,ms\n"));

    let file = dir.path().join("taken");
    fs::write(&file, "").unwrap();
    let out = ilmtr(&["--mock", "bench", "--suite", path_str(&suite), "--out", path_str(&file)]);
    assert_eq!(out.status.code(), Some(EXIT_OUTPUT));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[grid]]\nkind = \"pizza\"\nbogus = 1\n").unwrap();
    let out = ilmtr(&["--mock", "bench", "--suite", path_str(&bad), "--out", path_str(&dir.path().join("o2"))]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));

    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let empty_out = dir.path().join("o3");
    let out = ilmtr(&["--mock", "bench", "--suite", path_str(&empty), "--out", path_str(&empty_out)]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert_eq!(
        fs::read_to_string(empty_out.join("results.csv")).unwrap(),
        "case_id,mode,tokens,depth,score,rounds,ms\n"
    );
}
