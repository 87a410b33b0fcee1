//! Helpers for driving the `railguard` binary from tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Output, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;

use railguard_core::ingest::write_stream_string;
use railguard_core::simgen::{generate, NoiseSpec, Scenario};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_railguard")
}

pub fn railguard(args: &[&str]) -> Output {
    railguard_stdin(args, None)
}

pub fn railguard_stdin(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(bin())
        .args(args)
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn railguard");
    if let Some(bytes) = stdin {
        let mut pipe = child.stdin.take().unwrap();
        let bytes = bytes.to_vec();
        // Written from a thread so a full stdout pipe can't deadlock us.
        thread::spawn(move || {
            let _ = pipe.write_all(&bytes);
        });
    }
    child.wait_with_output().expect("wait railguard")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// A seeded random scenario with jitter, false positives and misses, so
/// alerts flicker on and off. Returns (stream text, calibration json).
pub fn noisy_stream(seed: u64) -> (String, String) {
    let mut s = Scenario::randomized(seed);
    s.noise = NoiseSpec {
        center_jitter_px: 10.0,
        false_positive_rate: 0.2,
        miss_rate: 0.1,
    };
    let (header, frames, _) = generate(&s);
    (write_stream_string(&header, &frames), s.calibration.to_json())
}

/// A running `railguard serve`.
pub struct Served {
    child: Child,
    pub tcp: SocketAddr,
    pub http: Option<SocketAddr>,
    stdout: Receiver<String>,
    stderr: Arc<Mutex<Vec<String>>>,
}

pub fn serve(extra: &[&str]) -> Served {
    let http_wanted = extra.contains(&"--http-listen");
    let mut child = Command::new(bin())
        .args(["serve", "--listen", "127.0.0.1:0"])
        .args(extra)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn serve");

    let (out_tx, stdout) = mpsc::channel();
    let out = child.stdout.take().unwrap();
    thread::spawn(move || {
        for line in BufReader::new(out).lines().map_while(Result::ok) {
            if out_tx.send(line).is_err() {
                break;
            }
        }
    });

    let (addr_tx, addr_rx) = mpsc::channel();
    let stderr = Arc::new(Mutex::new(Vec::new()));
    let log = stderr.clone();
    let err = child.stderr.take().unwrap();
    thread::spawn(move || {
        for line in BufReader::new(err).lines().map_while(Result::ok) {
            if let Some(rest) = line.strip_prefix("listening on ") {
                let _ = addr_tx.send(rest.to_string());
            }
            log.lock().unwrap().push(line);
        }
    });

    let (mut tcp, mut http) = (None, None);
    let deadline = Instant::now() + Duration::from_secs(15);
    while tcp.is_none() || (http_wanted && http.is_none()) {
        let left = deadline.saturating_duration_since(Instant::now());
        let Ok(line) = addr_rx.recv_timeout(left) else {
            let _ = child.kill();
            panic!("serve never reported its address; stderr: {:?}", stderr.lock().unwrap());
        };
        if let Some(a) = line.strip_prefix("tcp://") {
            tcp = Some(a.parse().unwrap());
        } else if let Some(a) = line.strip_prefix("http://") {
            http = Some(a.parse().unwrap());
        }
    }
    Served {
        child,
        tcp: tcp.unwrap(),
        http,
        stdout,
        stderr,
    }
}

impl Served {
    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    /// Sends SIGINT and waits for the process to exit.
    pub fn interrupt(&mut self, timeout: Duration) -> ExitStatus {
        let status = Command::new("kill")
            .args(["-INT", &self.pid().to_string()])
            .status()
            .expect("run kill");
        assert!(status.success());
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(s) = self.child.try_wait().unwrap() {
                return s;
            }
            if Instant::now() > deadline {
                let _ = self.child.kill();
                panic!("serve did not exit within {timeout:?} of SIGINT");
            }
            thread::sleep(Duration::from_millis(20));
        }
    }

    /// Everything the server wrote to stdout. Only complete once it has exited.
    pub fn stdout_lines(&self) -> Vec<String> {
        self.stdout.try_iter().collect()
    }

    pub fn stderr_lines(&self) -> Vec<String> {
        self.stderr.lock().unwrap().clone()
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One TCP session: send everything, half-close, read replies to EOF.
pub fn tcp_session(addr: SocketAddr, bytes: &[u8]) -> Vec<String> {
    let mut s = TcpStream::connect(addr).expect("connect");
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let mut reader = s.try_clone().unwrap();
    let bytes = bytes.to_vec();
    let writer = thread::spawn(move || {
        s.write_all(&bytes).unwrap();
        s.shutdown(Shutdown::Write).unwrap();
    });
    let mut text = String::new();
    reader.read_to_string(&mut text).expect("read replies");
    writer.join().unwrap();
    text.lines().map(str::to_string).collect()
}

pub fn only_alerts(lines: &[String]) -> Vec<String> {
    lines
        .iter()
        .filter(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.get("type").is_none()
        })
        .cloned()
        .collect()
}

/// One request as the mock webhook saw it.
#[derive(Debug, Clone)]
pub struct Hit {
    pub at: Instant,
    pub idempotency_key: Option<String>,
    pub attempt: Option<u32>,
    pub status: u16,
    pub body: serde_json::Value,
}

struct MockState {
    script: Vec<u16>,
    hits: Arc<Mutex<Vec<Hit>>>,
}

/// An HTTP endpoint answering with `script` in order, then 200 forever.
pub struct MockWebhook {
    pub url: String,
    pub hits: Arc<Mutex<Vec<Hit>>>,
}

impl MockWebhook {
    pub fn start(script: &[u16]) -> MockWebhook {
        let hits = Arc::new(Mutex::new(Vec::new()));
        let state = Arc::new(MockState {
            script: script.to_vec(),
            hits: hits.clone(),
        });
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                let app = Router::new().route("/hook", post(hook)).with_state(state);
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv_timeout(Duration::from_secs(10)).expect("mock started");
        MockWebhook {
            url: format!("http://{addr}/hook"),
            hits,
        }
    }

    pub fn hits(&self) -> Vec<Hit> {
        self.hits.lock().unwrap().clone()
    }

    pub fn wait_for(&self, n: usize, timeout: Duration) -> Vec<Hit> {
        let deadline = Instant::now() + timeout;
        while self.hits.lock().unwrap().len() < n && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(20));
        }
        self.hits()
    }
}

async fn hook(State(state): State<Arc<MockState>>, headers: HeaderMap, body: String) -> StatusCode {
    let at = Instant::now();
    let mut hits = state.hits.lock().unwrap();
    let status = state.script.get(hits.len()).copied().unwrap_or(200);
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    hits.push(Hit {
        at,
        idempotency_key: header("idempotency-key"),
        attempt: header("x-railguard-attempt").and_then(|v| v.parse().ok()),
        status,
        body: serde_json::from_str(&body).unwrap_or(serde_json::Value::Null),
    });
    StatusCode::from_u16(status).unwrap()
}
