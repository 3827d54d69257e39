use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use ilmtr::config::{AnswerModelParams, HttpParams, RunConfig};
use ilmtr::gateway::http::{OpenAiChat, OpenAiEmbedder, RoutedChat};
use ilmtr::gateway::{ChatBackend, ChatRequest, EmbeddingBackend, GatewayError, ModelParams};
use serde_json::{json, Value};

struct Recorded {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Recorded {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves one canned `(status, body)` per connection, in order, and reports
/// each request it saw.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Recorded>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            tx.send(Recorded {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn quick_http() -> HttpParams {
    HttpParams {
        timeout_secs: 5,
        retries: 0,
        backoff_ms: 1,
    }
}

fn answer_request() -> ChatRequest {
    ChatRequest {
        system_prompt: "sys".into(),
        user_prompt: "user".into(),
        params: ModelParams::Answer(AnswerModelParams::default()),
    }
}

#[test]
fn chat_golden_transcript() {
    let reply = json!({"choices": [{"message": {"role": "assistant", "content": "The kitchen."}}]});
    let (url, rx) = serve(vec![(200, reply.to_string())]);
    let chat = OpenAiChat::new(&url, "m1", "sk-test", &quick_http());
    assert_eq!(chat.chat(&answer_request()).unwrap(), "The kitchen.");

    let seen = rx.recv().unwrap();
    assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen.header("authorization"), Some("Bearer sk-test"));
    assert_eq!(
        seen.body,
        json!({
            "model": "m1",
            "messages": [
                {"role": "system", "content": "sys"},
                {"role": "user", "content": "user"}
            ],
            "temperature": 0.0,
            "max_tokens": 200,
            "frequency_penalty": 1.2
        })
    );
}

#[test]
fn summary_requests_route_to_the_summary_endpoint() {
    let reply = json!({"choices": [{"message": {"content": "(Summary): s\n(Surprise): "}}]});
    let (summary_url, rx) = serve(vec![(200, reply.to_string())]);
    let mut config = RunConfig::default();
    config.summary_model.url = format!("{summary_url}/v1");
    config.answer_model.url = "http://127.0.0.1:9".into();
    config.http = quick_http();
    let routed = RoutedChat::from_config(&config);
    let req = ilmtr::summarizer::build_summary_prompt("some context", &config).unwrap();
    assert!(routed.chat(&req).unwrap().starts_with("(Summary):"));
    let seen = rx.recv().unwrap();
    assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen.body["max_tokens"], json!(config.retriever.summary_max_tokens));
    assert!(seen.body.get("top_p").is_some());
    assert!(seen.header("authorization").is_none());
}

#[test]
fn embeddings_golden_transcript() {
    let reply = json!({"data": [
        {"index": 1, "embedding": [0.0, 2.0]},
        {"index": 0, "embedding": [3.0, 4.0]}
    ]});
    let (url, rx) = serve(vec![(200, reply.to_string())]);
    let embed = OpenAiEmbedder::new(&url, "e1", "", &quick_http());
    let out = embed.embed(&["a".to_string(), "b".to_string()]).unwrap();
    assert_eq!(out[0].as_slice(), &[0.6, 0.8]);
    assert_eq!(out[1].as_slice(), &[0.0, 1.0]);
    let seen = rx.recv().unwrap();
    assert_eq!(seen.request_line, "POST /v1/embeddings HTTP/1.1");
    assert_eq!(seen.body, json!({"model": "e1", "input": ["a", "b"]}));
}

#[test]
fn error_statuses_and_bad_bodies() {
    let (url, _rx) = serve(vec![
        (500, "{\"error\": \"boom\"}".into()),
        (200, "not json".into()),
        (200, json!({"choices": [{"message": {"content": "  "}}]}).to_string()),
    ]);
    let chat = OpenAiChat::new(&url, "m", "", &quick_http());
    match chat.chat(&answer_request()) {
        Err(GatewayError::Status { status: 500, body, .. }) => assert!(body.contains("boom")),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(chat.chat(&answer_request()), Err(GatewayError::Decode(_))));
    assert!(matches!(chat.chat(&answer_request()), Err(GatewayError::EmptyCompletion)));
}

#[test]
fn embedding_count_and_dimension_checks() {
    let (url, _rx) = serve(vec![
        (200, json!({"data": [{"index": 0, "embedding": [1.0]}]}).to_string()),
        (200, json!({"data": [{"embedding": [1.0]}, {"embedding": [1.0, 0.0]}]}).to_string()),
    ]);
    let embed = OpenAiEmbedder::new(&url, "e", "", &quick_http());
    let two = ["x".to_string(), "y".to_string()];
    assert!(matches!(embed.embed(&two), Err(GatewayError::Decode(_))));
    assert!(matches!(embed.embed(&two), Err(GatewayError::DimensionMismatch { .. })));
    assert!(matches!(
        embed.embed(&["ok".to_string(), " ".to_string()]),
        Err(GatewayError::EmptyInput { index: 1 })
    ));
}

#[test]
fn transport_failure_retries_then_reports() {
    let http = HttpParams {
        timeout_secs: 2,
        retries: 1,
        backoff_ms: 1,
    };
    let chat = OpenAiChat::new("http://127.0.0.1:9", "m", "", &http);
    match chat.chat(&answer_request()) {
        Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("unexpected {other:?}"),
    }
}
