//! Wire-level tests for the OpenAI-style HTTP lanes: request shape, bearer
//! auth, and the retry policy, all against a tiny in-process HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use setdiff::backend::config::{BackendConfig, BackendsFile};
use setdiff::backend::Gateway;
use setdiff::backend::ChatMessage;
use setdiff::Error;

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

type Handler = dyn Fn(&Seen, usize) -> (u16, String) + Send + Sync;

struct Server {
    addr: String,
    log: Arc<Mutex<Vec<Seen>>>,
}

/// One-thread-per-connection HTTP/1.1 server; lives until the test binary
/// exits. `handler` gets the parsed request and a 0-based hit counter.
fn serve(handler: Arc<Handler>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let log: Arc<Mutex<Vec<Seen>>> = Arc::default();
    let log_out = log.clone();
    let hits = AtomicUsize::new(0);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let n = hits.fetch_add(1, Ordering::SeqCst);
            if let Some(seen) = read_request(&stream) {
                let (status, body) = handler(&seen, n);
                log.lock().unwrap().push(seen);
                respond(&stream, status, &body);
            }
        }
    });
    Server { addr, log: log_out }
}

fn read_request(stream: &TcpStream) -> Option<Seen> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();

    let mut authorization = None;
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        let (name, value) = header.split_once(':')?;
        match name.to_ascii_lowercase().as_str() {
            "authorization" => authorization = Some(value.trim().to_string()),
            "content-length" => content_length = value.trim().parse().ok()?,
            _ => {}
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    let body = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    Some(Seen { path, authorization, body })
}

fn respond(mut stream: &TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        500 => "Internal Server Error",
        _ => "Unknown",
    };
    let _unused = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _unused = stream.flush();
}

fn chat_reply(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}

fn embedding_reply(vector: &[f64]) -> String {
    serde_json::json!({ "data": [{ "embedding": vector }] }).to_string()
}

fn backends(addr: &str, auth_env_var: Option<&str>, max_retries: u32) -> BackendsFile {
    let cfg = BackendConfig {
        endpoint: format!("{addr}/v1"),
        model_id: "test-model".into(),
        auth_env_var: auth_env_var.map(String::from),
        timeout: 10.0,
        max_concurrency: 2,
        max_retries,
    };
    BackendsFile {
        caption: None,
        chat: Some(cfg.clone()),
        embedding: Some(cfg),
        vqa: None,
    }
}

#[test]
fn chat_round_trip_posts_openai_shape() {
    let server = serve(Arc::new(|seen: &Seen, _| {
        assert_eq!(seen.path, "/v1/chat/completions");
        (200, chat_reply("a reply from the wire"))
    }));
    let gw = Gateway::from_backends(&backends(&server.addr, None, 0), None).unwrap();
    let reply = gw.complete_chat(&[ChatMessage::user("hello over http")]).unwrap();
    assert_eq!(reply, "a reply from the wire");

    let log = server.log.lock().unwrap();
    assert_eq!(log.len(), 1);
    let body = &log[0].body;
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello over http");
    assert_eq!(gw.ledger()["chat"].network, 1);
}

#[test]
fn embeddings_round_trip_normalizes_the_vector() {
    let server = serve(Arc::new(|seen: &Seen, _| {
        assert_eq!(seen.path, "/v1/embeddings");
        (200, embedding_reply(&[3.0, 4.0]))
    }));
    let gw = Gateway::from_backends(&backends(&server.addr, None, 0), None).unwrap();
    let embedding = gw.embed_text("a phrase").unwrap();
    assert_eq!(embedding.as_slice(), &[0.6, 0.8]);

    let log = server.log.lock().unwrap();
    assert_eq!(log[0].body["input"], serde_json::json!(["a phrase"]));
}

#[test]
fn bearer_token_comes_from_the_named_env_var() {
    // Process-global env: the var name is unique to this test.
    std::env::set_var("SETDIFF_TEST_KEY_BEARER", "sk-test-42");
    let server = serve(Arc::new(|_: &Seen, _| (200, chat_reply("ok"))));
    let gw = Gateway::from_backends(
        &backends(&server.addr, Some("SETDIFF_TEST_KEY_BEARER"), 0),
        None,
    )
    .unwrap();
    gw.complete_chat(&[ChatMessage::user("hi")]).unwrap();
    let log = server.log.lock().unwrap();
    assert_eq!(log[0].authorization.as_deref(), Some("Bearer sk-test-42"));
}

#[test]
fn missing_auth_env_var_is_a_config_error() {
    let err = match Gateway::from_backends(
        &backends("http://127.0.0.1:9", Some("SETDIFF_TEST_KEY_UNSET"), 0),
        None,
    ) {
        Err(e) => e,
        Ok(_) => panic!("gateway built without its API key"),
    };
    assert!(matches!(err, Error::Config(_)), "{err:?}");
    assert!(err.to_string().contains("SETDIFF_TEST_KEY_UNSET"), "{err}");
}

#[test]
fn retryable_500_is_retried_then_succeeds() {
    let server = serve(Arc::new(|_: &Seen, hit| {
        if hit == 0 {
            (500, r#"{"error":"transient"}"#.to_string())
        } else {
            (200, chat_reply("recovered"))
        }
    }));
    let gw = Gateway::from_backends(&backends(&server.addr, None, 2), None).unwrap();
    let reply = gw.complete_chat(&[ChatMessage::user("retry me")]).unwrap();
    assert_eq!(reply, "recovered");
    assert_eq!(server.log.lock().unwrap().len(), 2, "one failure + one retry");
    assert_eq!(gw.ledger()["chat"].network, 2);
}

#[test]
fn client_error_400_fails_without_retry() {
    let server = serve(Arc::new(|_: &Seen, _| (400, r#"{"error":"bad request"}"#.to_string())));
    let gw = Gateway::from_backends(&backends(&server.addr, None, 3), None).unwrap();
    let err = gw.complete_chat(&[ChatMessage::user("nope")]).unwrap_err();
    match err {
        Error::Backend { kind, attempts, message } => {
            assert_eq!(kind, "chat");
            assert_eq!(attempts, 1, "4xx must not be retried");
            assert!(message.contains("400"), "{message}");
        }
        other => panic!("expected a backend error, got {other:?}"),
    }
    assert_eq!(server.log.lock().unwrap().len(), 1);
}

#[test]
fn persistent_500_exhausts_retries() {
    let server = serve(Arc::new(|_: &Seen, _| (500, r#"{"error":"down"}"#.to_string())));
    let gw = Gateway::from_backends(&backends(&server.addr, None, 1), None).unwrap();
    let err = gw.complete_chat(&[ChatMessage::user("still down")]).unwrap_err();
    match err {
        Error::Backend { attempts, message, .. } => {
            assert_eq!(attempts, 2, "initial try + max_retries");
            assert!(message.contains("500"), "{message}");
        }
        other => panic!("expected a backend error, got {other:?}"),
    }
    assert_eq!(server.log.lock().unwrap().len(), 2);
}

#[test]
fn responses_are_cached_across_identical_calls() {
    let server = serve(Arc::new(|_: &Seen, _| (200, chat_reply("cached once"))));
    let gw = Gateway::from_backends(&backends(&server.addr, None, 0), None).unwrap();
    let first = gw.complete_chat(&[ChatMessage::user("same question")]).unwrap();
    let second = gw.complete_chat(&[ChatMessage::user("same question")]).unwrap();
    assert_eq!(first, second);
    assert_eq!(server.log.lock().unwrap().len(), 1, "second call must hit the cache");
    let counts = &gw.ledger()["chat"];
    assert_eq!((counts.network, counts.cache_hits), (1, 1));
}
