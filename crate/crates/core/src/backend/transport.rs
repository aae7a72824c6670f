//! HTTP transport with retry, backoff and a per-backend concurrency cap.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{BackendDescriptor, BackendError};

const MAX_BACKOFF: Duration = Duration::from_secs(30);
const MAX_RESPONSE_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

pub trait Transport: Send + Sync {
    fn post(&self, url: &str, headers: &[(String, String)], body: &[u8], timeout: Duration)
        -> Result<HttpResponse, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attempt {
    pub n: u32,
    pub status: Option<u16>,
    pub outcome: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AttemptLog {
    pub attempts: Vec<Attempt>,
}

impl AttemptLog {
    pub fn summary(&self) -> String {
        self.attempts.iter().map(|a| a.outcome.as_str()).collect::<Vec<_>>().join(", ")
    }
}

/// Blocking transport over `ureq`.
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &[u8],
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Io(other.to_string()),
        };
        let mut resp = req.send(body).map_err(map_err)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().with_config().limit(MAX_RESPONSE_BYTES).read_to_vec().map_err(map_err)?;
        Ok(HttpResponse { status, body })
    }
}

/// Counting semaphore bounding in-flight requests to one backend.
#[derive(Debug)]
pub struct Limiter {
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(cap: usize) -> Self {
        Self { cap: cap.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

/// POSTs `payload` with up to `retries + 1` attempts and exponential backoff.
///
/// Non-retryable statuses (4xx other than 429) fail immediately. When every
/// attempt timed out the error is `Timeout`, otherwise `Exhausted`.
pub fn invoke_backend(
    desc: &BackendDescriptor,
    transport: &dyn Transport,
    payload: &[u8],
) -> Result<(Vec<u8>, AttemptLog), BackendError> {
    desc.validate()?;
    let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
    if let Some(token) = desc.auth_env.as_deref().and_then(|v| std::env::var(v).ok()) {
        headers.push(("Authorization".to_string(), format!("Bearer {token}")));
    }
    let mut log = AttemptLog::default();
    for n in 0..=desc.retries {
        if n > 0 {
            let factor = 2u64.saturating_pow(n - 1);
            let wait = Duration::from_millis(desc.backoff_ms.saturating_mul(factor)).min(MAX_BACKOFF);
            thread::sleep(wait);
        }
        let started = Instant::now();
        let result = transport.post(&desc.endpoint, &headers, payload, desc.timeout);
        let latency_ms = started.elapsed().as_millis() as u64;
        let (status, outcome) = match &result {
            Ok(r) if (200..300).contains(&r.status) => (Some(r.status), "ok".to_string()),
            Ok(r) => (Some(r.status), format!("http {}", r.status)),
            Err(TransportError::Timeout) => (None, "timeout".to_string()),
            Err(TransportError::Io(e)) => (None, format!("io: {e}")),
        };
        log.attempts.push(Attempt { n: n + 1, status, outcome, latency_ms });
        match result {
            Ok(r) if (200..300).contains(&r.status) => return Ok((r.body, log)),
            Ok(r) if !retryable(r.status) => return Err(BackendError::Http(r.status)),
            _ => {}
        }
    }
    if log.attempts.iter().all(|a| a.outcome == "timeout") {
        Err(BackendError::Timeout(log))
    } else {
        Err(BackendError::Exhausted(log))
    }
}
