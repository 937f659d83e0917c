// Chat-completions client against a one-shot local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use signpipe_core::dialogue::{BackendError, HttpBackend, LlmBackend};

/// Serves one request with `status` and `body`; returns the raw request.
fn one_shot(status: &str, body: &'static str) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let status = status.to_string();
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut content_length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap();
            }
            head.push_str(&line);
            if line == "\r\n" {
                break;
            }
        }
        let mut payload = vec![0; content_length];
        reader.read_exact(&mut payload).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        head + &String::from_utf8(payload).unwrap()
    });
    (url, handle)
}

#[test]
fn posts_chat_request_and_reads_first_choice() {
    let (url, server) = one_shot("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"Hello there."}}]}"#);
    let mut backend = HttpBackend::new(url, "test-model");
    backend.api_key = Some("secret".into());
    assert_eq!(backend.complete("say hi").unwrap(), "Hello there.");

    let request = server.join().unwrap();
    assert!(request.starts_with("POST /v1/chat/completions"));
    assert!(request.to_ascii_lowercase().contains("authorization: bearer secret"));
    let json_start = request.find('{').unwrap();
    let body: serde_json::Value = serde_json::from_str(&request[json_start..]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "say hi");
}

#[test]
fn http_error_status_is_reported() {
    let (url, server) = one_shot("500 Internal Server Error", r#"{"error":"boom"}"#);
    let err = HttpBackend::new(url, "m").complete("x").unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 500, .. }), "{err}");
    server.join().unwrap();
}

#[test]
fn empty_choices_is_response_error() {
    let (url, server) = one_shot("200 OK", r#"{"choices":[]}"#);
    let err = HttpBackend::new(url, "m").complete("x").unwrap_err();
    assert!(matches!(err, BackendError::Response(_)), "{err}");
    server.join().unwrap();
}

#[test]
fn refused_connection_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = HttpBackend::new(format!("http://127.0.0.1:{port}"), "m").complete("x").unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err}");
}
