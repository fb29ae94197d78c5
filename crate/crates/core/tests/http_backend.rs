//! Chat-completions client against a local one-shot-per-connection server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use faithdebate::data::runlog::RunLog;
use faithdebate::gateway::{
    CompletionRequest, Decoding, Gateway, GatewayError, HttpBackend, HttpBackendConfig, RetryPolicy,
};
use serde_json::Value;

struct Server {
    base_url: String,
    requests: Arc<Mutex<Vec<(String, Value)>>>,
}

/// Serves `replies` in order, one per connection, recording (authorization, body).
fn serve(replies: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut len, mut auth) = (0usize, String::new());
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push((auth, serde_json::from_slice(&buf).unwrap_or(Value::Null)));
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    Server { base_url, requests }
}

fn ok(text: &str) -> (u16, String) {
    (200, serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] }).to_string())
}

fn gateway(server: &Server, retries: u32) -> Gateway {
    let cfg = HttpBackendConfig { base_url: server.base_url.clone(), model: "test-model".into(), timeout_s: 5 };
    let backend = HttpBackend::new(cfg, "secret".into()).unwrap();
    Gateway::new(Arc::new(backend), Arc::new(RunLog::in_memory("http"))).with_retry(RetryPolicy::no_delay(retries))
}

fn request() -> CompletionRequest {
    CompletionRequest::new("rec/zero_shot", "Is it faithful?", Decoding { temperature: 0.7, max_tokens: 64 })
}

#[test]
fn success_sends_model_messages_and_bearer() {
    let server = serve(vec![ok("<label>1</label>")]);
    let resp = gateway(&server, 0).complete(&request()).unwrap();
    assert_eq!(resp.text, "<label>1</label>");
    assert_eq!(resp.attempt, 1);
    let reqs = server.requests.lock().unwrap();
    let (auth, body) = &reqs[0];
    assert_eq!(auth, "Bearer secret");
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"].as_array().unwrap().last().unwrap()["content"], "Is it faithful?");
    assert_eq!(body["max_tokens"], 64);
}

#[test]
fn server_errors_and_rate_limits_are_retried() {
    let server = serve(vec![(500, "{}".into()), (429, "{}".into()), ok("done")]);
    let gw = gateway(&server, 3);
    let resp = gw.complete(&request()).unwrap();
    assert_eq!((resp.text.as_str(), resp.attempt), ("done", 3));
    let attempts = gw.runlog().entries().unwrap().len();
    assert_eq!(attempts, 3, "every attempt is logged");
}

#[test]
fn retries_run_out() {
    let server = serve(vec![(503, "{}".into()), (503, "{}".into())]);
    match gateway(&server, 1).complete(&request()) {
        Err(GatewayError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unauthorized_is_not_retried() {
    let server = serve(vec![(401, "{\"error\":\"bad key\"}".into()), ok("never")]);
    assert!(matches!(gateway(&server, 3).complete(&request()), Err(GatewayError::AuthError(_))));
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_transient() {
    let server = serve(vec![(200, "{\"choices\":[]}".into()), ok("fine")]);
    assert_eq!(gateway(&server, 1).complete(&request()).unwrap().text, "fine");
}
