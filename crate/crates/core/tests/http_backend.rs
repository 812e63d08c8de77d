//! HttpBackend against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use textcycle::gateway::{Backend, BackendConfig, BackendKind, GatewayError, HttpBackend, SampleRequest};

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: String,
}

/// Serves one canned response per connection, in order, and reports what
/// each request looked like.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            tx.send(Captured {
                request_line: request_line.trim_end().into(),
                headers,
                body: String::from_utf8(buf).unwrap(),
            })
            .unwrap();
        }
    });
    (url, rx)
}

fn backend(url: &str, key_env: Option<&str>, scoring: bool) -> HttpBackend {
    HttpBackend::from_config(&BackendConfig {
        kind: BackendKind::Http,
        base_url: Some(url.into()),
        api_key_env: key_env.map(String::from),
        supports_scoring: scoring,
        timeout_secs: 10,
        ..BackendConfig::default()
    })
    .unwrap()
}

#[test]
fn chat_sample_parses_choices_in_index_order() {
    let body = r#"{"choices":[
        {"index":1,"message":{"content":"second"},"logprobs":{"content":[{"logprob":-0.5},{"logprob":-1.5}]}},
        {"index":0,"message":{"content":"first"},"logprobs":{"content":[{"logprob":-0.25}]}}]}"#;
    let (url, rx) = serve(vec![(200, body.into())]);
    std::env::set_var("TEXTCYCLE_TEST_KEY_CHAT", "sk-test-123");
    let b = backend(&url, Some("TEXTCYCLE_TEST_KEY_CHAT"), false);
    let out = b
        .chat_sample(&SampleRequest {
            model: "gpt-x",
            prompt: "Please paraphrase: hi",
            n: 2,
            temperature: 0.6,
            top_p: 0.9,
        })
        .unwrap();
    assert_eq!(out[0].text, "first");
    assert_eq!(out[0].sum_logprob, Some(-0.25));
    assert_eq!(out[1].token_logprobs.as_deref(), Some(&[-0.5, -1.5][..]));

    let req = rx.recv().unwrap();
    assert_eq!(req.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert!(req.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test-123")));
    let json: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(json["n"], 2);
    assert_eq!(json["messages"][0]["content"], "Please paraphrase: hi");
    assert_eq!(json["logprobs"], true);
}

#[test]
fn embeddings_are_reordered_by_index() {
    let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
    let (url, rx) = serve(vec![(200, body.into())]);
    let b = backend(&url, None, false);
    let v = b.embed("emb", &["a".into(), "b".into()]).unwrap();
    assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let req = rx.recv().unwrap();
    assert!(req.request_line.starts_with("POST /v1/embeddings"));
    assert!(!req.headers.iter().any(|h| h.to_ascii_lowercase().starts_with("authorization")));
}

#[test]
fn echo_scoring_keeps_only_continuation_tokens() {
    // context "ab " is 3 chars; tokens at offsets 0 and 1 belong to it
    let body = r#"{"choices":[{"logprobs":{"token_logprobs":[null,-0.1,-0.7,-0.2],"text_offset":[0,1,3,5]}}]}"#;
    let (url, rx) = serve(vec![(200, body.into())]);
    let b = backend(&url, None, true);
    let lp = b.score_continuation("m", "ab ", "cd ef").unwrap();
    assert_eq!(lp, vec![-0.7, -0.2]);
    let json: serde_json::Value = serde_json::from_str(&rx.recv().unwrap().body).unwrap();
    assert_eq!(json["echo"], true);
    assert_eq!(json["max_tokens"], 0);
    assert_eq!(json["prompt"], "ab cd ef");
}

#[test]
fn scoring_without_support_is_a_capability_error() {
    let b = backend("http://127.0.0.1:9/v1", None, false);
    assert_eq!(b.score_continuation("m", "a", "b"), Err(GatewayError::Capability("score continuations")));
}

#[test]
fn non_success_status_is_surfaced_without_the_key() {
    let (url, _rx) = serve(vec![(429, r#"{"error":"slow down"}"#.into())]);
    std::env::set_var("TEXTCYCLE_TEST_KEY_ERR", "sk-very-secret");
    let b = backend(&url, Some("TEXTCYCLE_TEST_KEY_ERR"), false);
    let err = b.embed("m", &["x".into()]).unwrap_err();
    assert!(matches!(&err, GatewayError::Http { status: 429, .. }));
    assert!(err.is_retryable());
    assert!(!err.to_string().contains("sk-very-secret"));
    assert!(!format!("{b:?}").contains("sk-very-secret"));
}

#[test]
fn malformed_body_is_a_decode_error() {
    let (url, _rx) = serve(vec![(200, "{\"data\":7}".into())]);
    let b = backend(&url, None, false);
    assert!(matches!(b.embed("m", &["x".into()]), Err(GatewayError::Decode(_))));
}
