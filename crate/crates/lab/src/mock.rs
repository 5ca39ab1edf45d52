//! Scriptable stand-in for the VLM endpoint on a local TCP port.
//!
//! Replies are served from a queue, then a fallback repeats forever. Every
//! request is recorded so tests can inspect what the client sent.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
}

impl MockReply {
    /// `200` with `{"reply": text}`.
    pub fn text(text: &str) -> Self {
        Self { status: 200, body: serde_json::json!({ "reply": text }).to_string() }
    }

    pub fn status(status: u16) -> Self {
        Self { status, body: serde_json::json!({ "error": "injected failure" }).to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub model: Option<String>,
    pub prompt: Option<String>,
    pub image_count: usize,
    /// Every image decoded as a PNG.
    pub images_are_png: bool,
}

struct State {
    queue: VecDeque<MockReply>,
    fallback: MockReply,
    requests: Vec<RecordedRequest>,
}

pub struct MockVlmServer {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockVlmServer {
    /// Binds `127.0.0.1:port` (0 picks a free port).
    pub fn start(port: u16, script: Vec<MockReply>, fallback: MockReply) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))
            .map_err(|e| LabError::Runtime(format!("mock VLM cannot bind port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| LabError::Runtime(e.to_string()))?;
        let state = Arc::new(Mutex::new(State { queue: script.into(), fallback, requests: Vec::new() }));
        let stop = Arc::new(AtomicBool::new(false));
        let (st, sp) = (state.clone(), stop.clone());
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                if sp.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    if let Err(e) = serve(stream, &st) {
                        log::debug!("mock VLM connection error: {e}");
                    }
                }
            }
        });
        Ok(Self { addr, state, stop, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/score", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().expect("mock state").requests.clone()
    }

    /// Serves until the process ends.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockVlmServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so it sees the flag.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, state: &Mutex<State>) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut content_length = 0usize;
    let mut chunked = false;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let v = v.trim();
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.parse().unwrap_or(0),
                "transfer-encoding" => chunked = v.eq_ignore_ascii_case("chunked"),
                "authorization" => authorization = Some(v.to_string()),
                _ => {}
            }
        }
    }
    let body = if chunked { read_chunked(&mut reader)? } else { read_exact_vec(&mut reader, content_length)? };
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    let images: Vec<&str> =
        json.get("images").and_then(|v| v.as_array()).map(|a| a.iter().filter_map(|i| i.as_str()).collect()).unwrap_or_default();
    let images_are_png = images.iter().all(|b64| {
        use base64::Engine;
        base64::engine::general_purpose::STANDARD
            .decode(b64)
            .ok()
            .and_then(|bytes| image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).ok())
            .is_some()
    });
    let record = RecordedRequest {
        path,
        authorization,
        model: json.get("model").and_then(|v| v.as_str()).map(str::to_string),
        prompt: json.get("prompt").and_then(|v| v.as_str()).map(str::to_string),
        image_count: images.len(),
        images_are_png,
    };
    let reply = {
        let mut st = state.lock().expect("mock state");
        st.requests.push(record);
        st.queue.pop_front().unwrap_or_else(|| st.fallback.clone())
    };
    let reason = match reply.status {
        200 => "OK",
        401 => "Unauthorized",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()
}

fn read_exact_vec(r: &mut impl Read, n: usize) -> std::io::Result<Vec<u8>> {
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_chunked(r: &mut BufReader<TcpStream>) -> std::io::Result<Vec<u8>> {
    let mut out = Vec::new();
    loop {
        let mut size_line = String::new();
        r.read_line(&mut size_line)?;
        let size = usize::from_str_radix(size_line.trim().split(';').next().unwrap_or("0"), 16).unwrap_or(0);
        if size == 0 {
            let mut trailer = String::new();
            r.read_line(&mut trailer)?;
            return Ok(out);
        }
        out.extend(read_exact_vec(r, size)?);
        let mut crlf = [0u8; 2];
        r.read_exact(&mut crlf)?;
    }
}
