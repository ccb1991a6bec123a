use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use olp_llm::provider::{ChatMessage, ChatProvider, ChatProviderConfig, HttpProvider, ProviderError};

/// Serves one request with `status` and `body`; returns the request head and body.
fn serve_once(status: &str, body: &'static str) -> (String, thread::JoinHandle<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let status = status.to_string();
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut len = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            if line == "\r\n" {
                break;
            }
            head.push_str(&line);
        }
        let mut req = vec![0; len];
        reader.read_exact(&mut req).unwrap();
        let mut stream = stream;
        write!(stream, "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())
            .unwrap();
        (head, String::from_utf8(req).unwrap())
    });
    (url, handle)
}

fn config(endpoint: String, key_env: &str) -> ChatProviderConfig {
    ChatProviderConfig { endpoint, model: "test-model".into(), temperature: 0.0, api_key_env: key_env.into(), timeout_s: 10 }
}

#[test]
fn sends_bearer_key_from_env_and_reads_reply() {
    std::env::set_var("OLP_TEST_KEY_OK", "sk-local");
    let (url, server) = serve_once(
        "200 OK",
        r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#,
    );
    let p = HttpProvider::new(config(url, "OLP_TEST_KEY_OK")).unwrap();
    let reply = p.complete(&[ChatMessage::system("be brief"), ChatMessage::user("hi")]).unwrap();
    assert_eq!(reply.text, "hello");
    assert_eq!(reply.usage.total(), 9);

    let (head, body) = server.join().unwrap();
    assert!(head.to_ascii_lowercase().contains("authorization: bearer sk-local"), "{head}");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["model"], "test-model");
    assert_eq!(v["messages"][0]["role"], "system");
    assert_eq!(v["messages"][1]["content"], "hi");
}

#[test]
fn missing_usage_falls_back_to_estimate() {
    std::env::set_var("OLP_TEST_KEY_EST", "k");
    let (url, server) = serve_once("200 OK", r#"{"choices":[{"message":{"content":"abcdefgh"}}]}"#);
    let p = HttpProvider::new(config(url, "OLP_TEST_KEY_EST")).unwrap();
    let reply = p.complete(&[ChatMessage::user("abcd")]).unwrap();
    assert_eq!(reply.usage.completion_tokens, 2);
    server.join().unwrap();
}

#[test]
fn error_status_and_bad_shape_are_reported() {
    std::env::set_var("OLP_TEST_KEY_ERR", "k");
    let (url, server) = serve_once("429 Too Many Requests", r#"{"error":"slow down"}"#);
    let p = HttpProvider::new(config(url, "OLP_TEST_KEY_ERR")).unwrap();
    let e = p.complete(&[ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(&e, ProviderError::Http(m) if m.contains("429")), "{e}");
    server.join().unwrap();

    let (url, server) = serve_once("200 OK", r#"{"choices":[]}"#);
    let p = HttpProvider::new(config(url, "OLP_TEST_KEY_ERR")).unwrap();
    assert!(matches!(p.complete(&[ChatMessage::user("x")]), Err(ProviderError::BadResponse(_))));
    server.join().unwrap();
}

#[test]
fn unset_key_fails_before_any_request() {
    let p = HttpProvider::new(config("http://127.0.0.1:9/none".into(), "OLP_TEST_KEY_NEVER_SET")).unwrap();
    let e = p.complete(&[ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(e, ProviderError::MissingCredential(ref k) if k == "OLP_TEST_KEY_NEVER_SET"));
}

#[test]
fn config_rejects_negative_temperature() {
    let mut c = config("http://x".into(), "K");
    c.temperature = -0.5;
    assert!(HttpProvider::new(c).is_err());
}
