//! At-least-once webhook delivery for alert events.
//!
//! Events go through a bounded queue to a single delivery task, so they are
//! posted in the order they were raised and a slow receiver pushes back on
//! ingestion instead of losing events. Each request carries an
//! `Idempotency-Key` (`source_id:object_key:frame_index:kind`) that is the same
//! on every retry, and `X-Railguard-Attempt` counting from 1.

use std::time::Duration;

use reqwest::StatusCode;
use serde::Serialize;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use railguard_core::pipeline::AlertEvent;

pub const IDEMPOTENCY_HEADER: &str = "Idempotency-Key";
pub const ATTEMPT_HEADER: &str = "X-Railguard-Attempt";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub max_delay: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_millis(500),
            factor: 2,
            max_delay: Duration::from_secs(30),
            max_retries: 8,
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let mult = (self.factor as u64).saturating_pow(retry.saturating_sub(1));
        let ms = (self.base.as_millis() as u64).saturating_mul(mult);
        Duration::from_millis(ms).min(self.max_delay)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Delivery {
    pub source_id: String,
    #[serde(flatten)]
    pub event: AlertEvent,
}

impl Delivery {
    pub fn idempotency_key(&self) -> String {
        format!(
            "{}:{}:{}:{}",
            self.source_id,
            self.event.object_key,
            self.event.frame_index,
            self.event.kind.as_str()
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeliveryStats {
    pub delivered: u64,
    pub failed: u64,
    pub attempts: u64,
}

/// Sending half; clone one per session. Dropping every clone lets the
/// delivery task drain the queue and finish.
#[derive(Clone)]
pub struct WebhookHandle {
    tx: mpsc::Sender<Delivery>,
}

impl WebhookHandle {
    /// Waits for queue space rather than dropping the event.
    pub async fn send(&self, delivery: Delivery) {
        if self.tx.send(delivery).await.is_err() {
            log::error!("webhook worker is gone; event not queued");
        }
    }
}

pub fn spawn(url: String, policy: RetryPolicy, capacity: usize) -> (WebhookHandle, JoinHandle<DeliveryStats>) {
    let (tx, mut rx) = mpsc::channel::<Delivery>(capacity.max(1));
    let worker = tokio::spawn(async move {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("http client builds");
        let mut stats = DeliveryStats::default();
        while let Some(d) = rx.recv().await {
            deliver(&client, &url, &policy, &d, &mut stats).await;
        }
        stats
    });
    (WebhookHandle { tx }, worker)
}

enum Outcome {
    Done,
    Retry(String),
    GiveUp(String),
}

async fn attempt(client: &reqwest::Client, url: &str, body: &str, key: &str, n: u32) -> Outcome {
    let res = client
        .post(url)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .header(IDEMPOTENCY_HEADER, key)
        .header(ATTEMPT_HEADER, n.to_string())
        .body(body.to_owned())
        .send()
        .await;
    match res {
        Ok(r) if r.status().is_success() => Outcome::Done,
        Ok(r) => {
            let s = r.status();
            // Other client errors will not fix themselves on retry.
            if s.is_client_error() && s != StatusCode::REQUEST_TIMEOUT && s != StatusCode::TOO_MANY_REQUESTS {
                Outcome::GiveUp(format!("HTTP {s}"))
            } else {
                Outcome::Retry(format!("HTTP {s}"))
            }
        }
        Err(e) => Outcome::Retry(e.to_string()),
    }
}

async fn deliver(client: &reqwest::Client, url: &str, policy: &RetryPolicy, d: &Delivery, stats: &mut DeliveryStats) {
    let key = d.idempotency_key();
    let body = serde_json::to_string(d).expect("delivery serializes");
    for n in 1..=policy.max_retries + 1 {
        if n > 1 {
            tokio::time::sleep(policy.delay(n - 1)).await;
        }
        stats.attempts += 1;
        match attempt(client, url, &body, &key, n).await {
            Outcome::Done => {
                log::debug!("delivered {key} on attempt {n}");
                stats.delivered += 1;
                return;
            }
            Outcome::Retry(why) => log::warn!("webhook attempt {n} for {key} failed: {why}"),
            Outcome::GiveUp(why) => {
                log::error!("webhook rejected {key}: {why}; not retrying");
                stats.failed += 1;
                return;
            }
        }
    }
    log::error!("giving up on {key} after {} attempts", policy.max_retries + 1);
    stats.failed += 1;
}
