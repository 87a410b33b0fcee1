//! Network ingestion.
//!
//! TCP: one connection is one session. The client writes wire-format lines;
//! the server answers on the same connection with one line per alert or
//! rejected line, and a `{"type":"summary",...}` line once the client shuts
//! down its write side.
//!
//! HTTP (optional): `POST /sessions/{id}/lines` with a batch of lines in the
//! body answers with the same reply lines; `POST /sessions/{id}/close` ends
//! the session and answers with its summary.
//!
//! Every alert is also written to stdout, exactly as `analyze` writes it, and
//! queued for the webhook when one is configured.

use std::collections::HashMap;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{watch, Mutex as AsyncMutex};
use tokio::task::JoinSet;

use railguard_core::calibration::Calibration;
use railguard_core::pipeline::PipelineConfig;

use crate::args::ServeArgs;
use crate::error::{CliError, CliResult};
use crate::session::{Reply, Session};
use crate::webhook::{self, Delivery, RetryPolicy, WebhookHandle};

struct Shared {
    cal: Calibration,
    cfg: PipelineConfig,
    webhook: Option<WebhookHandle>,
    stdout: Mutex<io::Stdout>,
}

impl Shared {
    fn new_session(&self) -> Session {
        Session::new(self.cal.clone(), self.cfg.clone())
    }

    /// Publishes one session's replies: alerts to stdout and the webhook.
    async fn publish(&self, source_id: Option<&str>, replies: &[Reply]) {
        for r in replies {
            let Reply::Alert(event) = r else { continue };
            {
                let mut out = self.stdout.lock().expect("stdout lock");
                if let Err(e) = writeln!(out, "{}", event.to_json_line()).and_then(|_| out.flush()) {
                    log::error!("writing alert to stdout: {e}");
                }
            }
            if let Some(hook) = &self.webhook {
                hook.send(Delivery {
                    source_id: source_id.unwrap_or_default().to_string(),
                    event: event.clone(),
                })
                .await;
            }
        }
    }
}

pub fn run(args: &ServeArgs) -> CliResult<()> {
    args.pipeline.check_paths()?;
    let cfg = args.pipeline.config()?;
    if let Some(url) = &args.webhook {
        let parsed = reqwest::Url::parse(url).map_err(|e| CliError::Usage(format!("--webhook: `{url}`: {e}")))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(CliError::Usage(format!("--webhook: `{url}` is not an http(s) URL")));
        }
    }
    let cal = args.pipeline.calibration()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("starting runtime", e))?;
    runtime.block_on(serve(args, cal, cfg))
}

async fn bind(addr: &str, flag: &str) -> CliResult<TcpListener> {
    TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Io(format!("{flag}: cannot listen on `{addr}`: {e}")))
}

async fn serve(args: &ServeArgs, cal: Calibration, cfg: PipelineConfig) -> CliResult<()> {
    let tcp = bind(&args.listen, "--listen").await?;
    let http = match &args.http_listen {
        Some(a) => Some(bind(a, "--http-listen").await?),
        None => None,
    };

    let (webhook, worker) = match &args.webhook {
        Some(url) => {
            let (h, w) = webhook::spawn(url.clone(), RetryPolicy::default(), args.queue_capacity);
            (Some(h), Some(w))
        }
        None => (None, None),
    };
    let shared = Arc::new(Shared {
        cal,
        cfg,
        webhook,
        stdout: Mutex::new(io::stdout()),
    });

    // Scripts binding port 0 read the real address from here.
    let local = |l: &TcpListener| l.local_addr().map(|a| a.to_string()).unwrap_or_default();
    eprintln!("listening on tcp://{}", local(&tcp));
    let (stop_tx, stop_rx) = watch::channel(false);
    let http_task = http.map(|listener| {
        eprintln!("listening on http://{}", local(&listener));
        let app = router(shared.clone());
        let mut stop = stop_rx.clone();
        tokio::spawn(async move {
            let shutdown = async move {
                let _ = stop.wait_for(|s| *s).await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                log::error!("http server: {e}");
            }
        })
    });

    let mut sessions = JoinSet::new();
    // Created once: a fresh future per iteration could miss a signal that
    // lands between iterations.
    let interrupt = tokio::signal::ctrl_c();
    tokio::pin!(interrupt);
    loop {
        tokio::select! {
            accepted = tcp.accept() => match accepted {
                Ok((stream, peer)) => {
                    sessions.spawn(tcp_session(stream, peer, shared.clone()));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
            Some(_) = sessions.join_next(), if !sessions.is_empty() => {}
            _ = &mut interrupt => {
                log::warn!("interrupt received; shutting down");
                break;
            }
        }
    }

    drop(tcp);
    sessions.shutdown().await;
    let _ = stop_tx.send(true);
    if let Some(t) = http_task {
        let _ = t.await;
    }
    drop(shared);
    if let Some(w) = worker {
        // Every sender is gone, so this returns once the queue is drained.
        match w.await {
            Ok(stats) => log::info!(
                "webhook: {} delivered, {} failed, {} attempts",
                stats.delivered,
                stats.failed,
                stats.attempts
            ),
            Err(e) => log::error!("webhook worker: {e}"),
        }
    }
    Ok(())
}

async fn tcp_session(stream: TcpStream, peer: SocketAddr, shared: Arc<Shared>) {
    log::info!("session from {peer} opened");
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut session = shared.new_session();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf).await {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                log::warn!("session from {peer}: connection dropped: {e}");
                break;
            }
        }
        let replies = match std::str::from_utf8(&buf) {
            Ok(text) => session.feed_line(text.trim_end_matches(['\n', '\r'])),
            // Still counts as a line so later line numbers stay right.
            Err(_) => {
                let mut r = session.feed_line("\u{0}");
                if let Some(Reply::Error { error, .. }) = r.first_mut() {
                    *error = "line is not valid UTF-8".into();
                }
                r
            }
        };
        shared.publish(session.source_id(), &replies).await;
        let mut out = String::new();
        for r in &replies {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        if !out.is_empty() && write.write_all(out.as_bytes()).await.is_err() {
            log::warn!("session from {peer}: client stopped reading replies");
        }
    }
    let summary = session.summary();
    log::info!(
        "session from {peer} closed: {} frames in, {} processed, {} rejected lines",
        summary.frames_in,
        summary.run.frames,
        summary.rejected_lines
    );
    let line = summary.to_json_line() + "\n";
    let _ = write.write_all(line.as_bytes()).await;
    let _ = write.shutdown().await;
}

type SessionMap = AsyncMutex<HashMap<String, Arc<AsyncMutex<Session>>>>;

struct HttpState {
    shared: Arc<Shared>,
    sessions: SessionMap,
}

fn router(shared: Arc<Shared>) -> Router {
    let state = Arc::new(HttpState {
        shared,
        sessions: AsyncMutex::new(HashMap::new()),
    });
    Router::new()
        .route("/healthz", get(|| async { "ok\n" }))
        .route("/sessions/{id}/lines", post(post_lines))
        .route("/sessions/{id}/close", post(close_session))
        .with_state(state)
}

const NDJSON: [(header::HeaderName, &str); 1] = [(header::CONTENT_TYPE, "application/x-ndjson")];

async fn post_lines(State(state): State<Arc<HttpState>>, Path(id): Path<String>, body: String) -> impl IntoResponse {
    let session = state
        .sessions
        .lock()
        .await
        .entry(id)
        .or_insert_with(|| Arc::new(AsyncMutex::new(state.shared.new_session())))
        .clone();
    // Holding the session lock keeps concurrent batches for one id in order.
    let mut session = session.lock().await;
    let mut out = String::new();
    for line in body.lines() {
        let replies = session.feed_line(line);
        state.shared.publish(session.source_id(), &replies).await;
        for r in &replies {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
    }
    (StatusCode::OK, NDJSON, out)
}

async fn close_session(State(state): State<Arc<HttpState>>, Path(id): Path<String>) -> impl IntoResponse {
    let Some(session) = state.sessions.lock().await.remove(&id) else {
        return (StatusCode::NOT_FOUND, NDJSON, format!("{{\"type\":\"error\",\"error\":\"no session `{id}`\"}}\n"));
    };
    let summary = session.lock().await.summary();
    (StatusCode::OK, NDJSON, summary.to_json_line() + "\n")
}
