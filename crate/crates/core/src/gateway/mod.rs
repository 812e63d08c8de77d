//! Backends for text generation, continuation scoring and embeddings.
//!
//! [`HttpBackend`] speaks the OpenAI-compatible wire format;
//! [`MockBackend`] is a pure function of its inputs for offline use.

mod http;
mod mock;

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chain::Candidate;

pub use http::HttpBackend;
pub use mock::{hash_embedding, MockBackend, MockTable, CANONICAL_TOKEN_LOGPROB, ECHO_MARKER, MOCK_EMBED_DIM, OFF_CANONICAL_TOKEN_LOGPROB};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("backend cannot {0}")]
    Capability(&'static str),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("injected failure: {0}")]
    Injected(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    /// Whether another attempt can reasonably succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            GatewayError::Transport(_) | GatewayError::Timeout | GatewayError::Injected(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub n: usize,
    pub temperature: f64,
    pub top_p: f64,
}

pub trait Backend: Send + Sync {
    /// Samples `n` candidate completions for a single-turn prompt.
    fn chat_sample(&self, req: &SampleRequest<'_>) -> Result<Vec<Candidate>, GatewayError>;

    /// Natural-log probability of each continuation token given the context.
    fn score_continuation(&self, _model: &str, _context: &str, _continuation: &str) -> Result<Vec<f64>, GatewayError> {
        Err(GatewayError::Capability("score continuations"))
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub model: String,
    pub embedding_model: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Server exposes `/completions` with `echo` + `logprobs` for scoring.
    pub supports_scoring: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: None,
            api_key_env: Some("OPENAI_API_KEY".into()),
            model: "mock".into(),
            embedding_model: None,
            timeout_secs: 60,
            max_retries: 3,
            max_in_flight: 4,
            supports_scoring: false,
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn Backend>, GatewayError> {
        match self.kind {
            BackendKind::Mock => Ok(Box::new(MockBackend::default())),
            BackendKind::Http => Ok(Box::new(HttpBackend::from_config(self)?)),
        }
    }
}

/// Bounded attempts with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn run<T, F>(&self, mut op: F) -> Result<T, GatewayError>
    where
        F: FnMut() -> Result<T, GatewayError>,
    {
        let attempts = self.attempts.max(1);
        let mut backoff = Duration::from_millis(self.initial_backoff_ms);
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt < attempts && e.is_retryable() => {
                    log::warn!("attempt {attempt}/{attempts} failed: {e}; retrying in {backoff:?}");
                    thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
pub(crate) struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a InFlight);

impl InFlight {
    pub(crate) fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retry_stops_after_budget() {
        let calls = Cell::new(0);
        let policy = RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 0,
        };
        let res: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(GatewayError::Timeout)
        });
        assert_eq!(res, Err(GatewayError::Timeout));
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn non_retryable_errors_fail_fast() {
        let calls = Cell::new(0);
        let res: Result<(), _> = RetryPolicy::default().run(|| {
            calls.set(calls.get() + 1);
            Err(GatewayError::Http {
                status: 400,
                body: "bad".into(),
            })
        });
        assert!(res.is_err());
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn retry_recovers() {
        let calls = Cell::new(0);
        let policy = RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 0,
        };
        let res = policy.run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 2 {
                Err(GatewayError::Transport("reset".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(res, Ok(7));
    }

    #[test]
    fn in_flight_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let gate = InFlight::new(2);
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    let _p = gate.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
