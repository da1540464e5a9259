use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use ramp_core::gateway::{Cassette, ChatRequest, HttpBackend};
use ramp_core::retrieval::rewrite_instruction;
use ramp_core::{GatewayError, GeneratorGateway, LlmMode, Query};

/// Minimal chat-completions server; answers every request with `answer`.
fn stub_server(answer: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert!(req["messages"][0]["content"].is_array());
            counter.fetch_add(1, Ordering::SeqCst);
            let reply =
                serde_json::json!({"choices": [{"message": {"role": "assistant", "content": answer}}]}).to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (format!("http://{addr}/v1"), hits)
}

#[test]
fn record_mode_serves_repeats_from_the_cassette() {
    let (endpoint, hits) = stub_server("pick_place(obj=\"the red block\", target=\"the bowl\")");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.jsonl");
    let backend = HttpBackend::with_key(&endpoint, None, Duration::from_secs(5));
    let gw = GeneratorGateway::new(
        LlmMode::Record,
        "stub",
        Some(Cassette::open(&path).unwrap()),
        Some(Box::new(backend)),
    );

    let first = gw.complete_text("put the red block into the bowl").unwrap();
    let second = gw.complete_text("put the red block into the bowl").unwrap();
    assert_eq!(first, second);
    assert_eq!(gw.backend_calls(), 1);
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    // the file alone replays the exchange
    let replay = GeneratorGateway::replay("stub", &path).unwrap();
    assert_eq!(replay.complete_text("put the red block into the bowl").unwrap(), first);
    assert_eq!(replay.backend_calls(), 0);
}

#[test]
fn replay_miss_names_the_hash() {
    let gw = GeneratorGateway::new(LlmMode::Replay, "m", Some(Cassette::in_memory()), None);
    let req = ChatRequest::new("m", 0.0, "never recorded", None);
    match gw.complete(&req) {
        Err(GatewayError::CassetteMiss(h)) => assert_eq!(h, req.hash()),
        other => panic!("expected a miss, got {other:?}"),
    }
}

#[test]
fn live_without_backend_fails() {
    let gw = GeneratorGateway::new(LlmMode::Live, "m", None, None);
    assert!(matches!(gw.complete_text("x"), Err(GatewayError::NoBackend(_))));
}

#[test]
fn hash_ignores_nothing_that_matters() {
    let base = ChatRequest::new("m", 0.0, "text", Some(b"png"));
    assert_ne!(base.hash(), ChatRequest::new("n", 0.0, "text", Some(b"png")).hash());
    assert_ne!(base.hash(), ChatRequest::new("m", 0.5, "text", Some(b"png")).hash());
    assert_ne!(base.hash(), ChatRequest::new("m", 0.0, "text", Some(b"gif")).hash());
    assert_ne!(base.hash(), ChatRequest::new("m", 0.0, "text", None).hash());
    assert_eq!(base.hash(), ChatRequest::new("m", 0.0, "text", Some(b"png")).hash());
}

#[test]
fn rewriter_example_replays() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/cassettes/rewriter_example.jsonl");
    let gw = GeneratorGateway::replay("imitation-v1", path).unwrap();
    let q = Query::new("Please pick up the cute little block that looks red and then gently put it into the big bowl")
        .unwrap();
    let out = rewrite_instruction(&q, &gw).unwrap();
    assert_eq!(out.text(), "pick up the red block. place it into the bowl");
    assert_eq!(out.raw, q.raw);
}
