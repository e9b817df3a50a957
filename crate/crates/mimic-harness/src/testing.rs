//! Scripted in-process chat-completions server for harness tests.
//!
//! The server answers each request from a per-query script of HTTP
//! statuses (e.g. two 429s before a 200) and a truth table keyed by the
//! request's `user` field, captures every request body it sees, and
//! tracks the high-water mark of concurrently open requests.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// One observed request.
#[derive(Debug, Clone)]
pub struct Capture {
    pub query_id: String,
    pub status: u16,
    /// Base64 payloads of the image parts, in request order.
    pub image_data: Vec<String>,
    pub text: String,
}

#[derive(Default)]
pub struct MockState {
    /// query_id -> response text for 200s; missing ids answer "ok".
    pub truths: Mutex<HashMap<String, String>>,
    /// query_id -> statuses to emit before succeeding (drained in order).
    pub scripts: Mutex<HashMap<String, Vec<u16>>>,
    pub captures: Mutex<Vec<Capture>>,
    pub response_delay: Mutex<Duration>,
    inflight: AtomicUsize,
    pub max_inflight: AtomicUsize,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    stop: Arc<AtomicBool>,
    accept_handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let state = Arc::new(MockState::default());
        let stop = Arc::new(AtomicBool::new(false));
        let accept_state = Arc::clone(&state);
        let accept_stop = Arc::clone(&stop);
        let accept_handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let state = Arc::clone(&accept_state);
                std::thread::spawn(move || handle_connection(stream, &state));
            }
        });
        MockServer {
            addr,
            state,
            stop,
            accept_handle: Some(accept_handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<MockState> {
        &self.state
    }

    pub fn set_truths(&self, truths: impl IntoIterator<Item = (String, String)>) {
        self.state.truths.lock().unwrap().extend(truths);
    }

    pub fn script_statuses(&self, query_id: &str, statuses: &[u16]) {
        self.state
            .scripts
            .lock()
            .unwrap()
            .insert(query_id.to_string(), statuses.to_vec());
    }

    pub fn set_delay(&self, delay: Duration) {
        *self.state.response_delay.lock().unwrap() = delay;
    }

    pub fn captures(&self) -> Vec<Capture> {
        self.state.captures.lock().unwrap().clone()
    }

    pub fn max_inflight(&self) -> usize {
        self.state.max_inflight.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(stream: TcpStream, state: &MockState) {
    let peer = stream.try_clone();
    let mut reader = BufReader::new(stream);
    let Some(body) = read_request(&mut reader) else {
        return;
    };
    let Ok(mut out) = peer else { return };

    let current = state.inflight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_inflight.fetch_max(current, Ordering::SeqCst);
    let delay = *state.response_delay.lock().unwrap();
    if !delay.is_zero() {
        std::thread::sleep(delay);
    }

    let parsed: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let query_id = parsed["user"].as_str().unwrap_or_default().to_string();
    let mut image_data = Vec::new();
    let mut text = String::new();
    if let Some(content) = parsed["messages"][0]["content"].as_array() {
        for part in content {
            match part["type"].as_str() {
                Some("image_url") => {
                    let url = part["image_url"]["url"].as_str().unwrap_or_default();
                    let b64 = url.split("base64,").nth(1).unwrap_or_default();
                    image_data.push(b64.to_string());
                }
                Some("text") => text = part["text"].as_str().unwrap_or_default().to_string(),
                _ => {}
            }
        }
    }

    let scripted = {
        let mut scripts = state.scripts.lock().unwrap();
        match scripts.get_mut(&query_id) {
            Some(statuses) if !statuses.is_empty() => Some(statuses.remove(0)),
            _ => None,
        }
    };
    let (status, body_text) = match scripted {
        Some(code) => (code, format!("{{\"error\":\"scripted {code}\"}}")),
        None => {
            let truths = state.truths.lock().unwrap();
            let answer = truths.get(&query_id).cloned().unwrap_or_else(|| "ok".into());
            let body = serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": answer}}]
            });
            (200, body.to_string())
        }
    };

    state.captures.lock().unwrap().push(Capture {
        query_id,
        status,
        image_data,
        text,
    });
    state.inflight.fetch_sub(1, Ordering::SeqCst);

    let reason = match status {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let _ = write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body_text}",
        body_text.len()
    );
    let _ = out.flush();
}

/// Minimal HTTP/1.1 request reader: headers, then Content-Length bytes.
fn read_request(reader: &mut BufReader<TcpStream>) -> Option<Vec<u8>> {
    let mut line = String::new();
    if reader.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some(value) = header
            .split_once(':')
            .filter(|(name, _)| name.eq_ignore_ascii_case("content-length"))
            .map(|(_, v)| v.trim())
        {
            content_length = value.parse().ok()?;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    Some(body)
}
