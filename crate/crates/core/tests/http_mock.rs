mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use common::{question, response};
use mad_core::backend::{
    Backend, BackendError, DebateRequest, HttpBackend, PromptTemplate, API_KEY_ENV,
};
use mad_core::config::HttpParams;
use mad_core::Method;

struct Captured {
    head: String,
    body: String,
}

/// Serves the scripted (status, body) replies in order, one per connection,
/// and reports each request it saw.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            tx.send(Captured {
                head,
                body: String::from_utf8(buf).unwrap(),
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
    (addr, rx)
}

fn completion(content: &str) -> String {
    serde_json::json!({
        "choices": [{
            "message": {"role": "assistant", "content": content},
            "logprobs": {"content": [{"token": "a", "logprob": -0.25}, {"token": "b", "logprob": -1.5}]}
        }],
        "usage": {"prompt_tokens": 321, "completion_tokens": 45}
    })
    .to_string()
}

fn backend(endpoint: String) -> HttpBackend {
    HttpBackend::new(
        HttpParams {
            endpoint,
            model: "test-model".into(),
            sampling: Default::default(),
            timeout_secs: 5,
            retry_base_ms: 1,
        },
        PromptTemplate::default(),
    )
    .unwrap()
}

#[test]
fn http_backend_end_to_end() {
    std::env::set_var(API_KEY_ENV, "secret-token");

    // retry after a server error, then succeed
    let (addr, seen) = serve(vec![
        (503, "{}".into()),
        (
            200,
            completion("Work.\nAnswer: \\boxed{42}\nConfidence: 0.9"),
        ),
    ]);
    let b = backend(addr);
    let q = question("h1", "42");
    let r = b.generate_initial(&q, 2).unwrap();
    assert_eq!(r.agent_id, 2);
    assert_eq!(r.answer.canonical(), "42");
    assert_eq!(r.token_logliks, vec![-0.25, -1.5]);
    assert_eq!((r.input_tokens, r.output_tokens), (321, 45));
    assert_eq!(r.self_confidence, Some(0.9));
    let first = seen.recv().unwrap();
    let second = seen.recv().unwrap();
    assert!(first.head.starts_with("POST /v1/chat/completions"));
    assert!(second
        .head
        .to_ascii_lowercase()
        .contains("authorization: bearer secret-token"));
    let body: serde_json::Value = serde_json::from_str(&second.body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["logprobs"], true);
    assert_eq!(body["top_k"], 40);
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .contains("What is the answer?"));

    // client errors are not retried
    let (addr, seen) = serve(vec![(400, "{\"error\":\"bad\"}".into())]);
    let err = backend(addr).generate_initial(&q, 0).unwrap_err();
    assert!(
        matches!(
            err,
            BackendError::Transport {
                attempts: 1,
                retryable: false,
                ..
            }
        ),
        "{err}"
    );
    assert!(seen.recv().is_ok());

    // persistent server errors give up after three attempts
    let (addr, _seen) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (502, "{}".into()),
    ]);
    let err = backend(addr).generate_initial(&q, 0).unwrap_err();
    assert!(
        matches!(
            err,
            BackendError::Transport {
                attempts: 3,
                retryable: true,
                ..
            }
        ),
        "{err}"
    );

    // malformed success body
    let (addr, _seen) = serve(vec![(200, "{\"choices\":[]}".into())]);
    assert!(matches!(
        backend(addr).generate_initial(&q, 0),
        Err(BackendError::Parse(_))
    ));

    // debate prompt carries the peer output
    let (addr, seen) = serve(vec![(200, completion("Answer: 41"))]);
    let mut peer = response(3, "41", -0.5);
    peer.reasoning = "PEER-REASONING-MARKER".into();
    let own = response(1, "40", -0.5);
    let post = backend(addr)
        .debate(&DebateRequest {
            method: Method::SvrMad,
            question: &q,
            receiver_id: 1,
            receiver_history: std::slice::from_ref(&own),
            senders: std::slice::from_ref(&peer),
            answer_only: &[],
            event_index: 0,
            turn: 1,
        })
        .unwrap();
    assert_eq!(
        (post.agent_id, post.turn, post.answer.canonical()),
        (1, 1, "41")
    );
    let body: serde_json::Value = serde_json::from_str(&seen.recv().unwrap().body).unwrap();
    let prompt = body["messages"][0]["content"].as_str().unwrap();
    assert_eq!(prompt.matches("PEER-REASONING-MARKER").count(), 1);

    std::env::remove_var(API_KEY_ENV);
}
