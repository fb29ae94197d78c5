//! Completion gateway: one call interface over pluggable backends, with retry,
//! rate limiting and a run-log entry for every attempt.

mod http;
mod rate_limit;
mod scripted;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::data::runlog::{RunLog, RunLogError};
use crate::seeds;

pub use http::{HttpBackend, HttpBackendConfig, API_KEY_ENV};
pub use rate_limit::{RateLimiter, RateLimiterStats};
pub use scripted::{glob_match, ScriptEntry, ScriptedBackend, ScriptedBackendSpec};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable for {tag} after {attempts} attempts: {last_error}")]
    BackendUnavailable { tag: String, attempts: u32, last_error: String },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("scripted backend has no response left for {tag}")]
    ScriptedExhausted { tag: String },
    #[error("invalid completion request {tag}: {reason}")]
    InvalidRequest { tag: String, reason: String },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: String,
}

impl CompletionRequest {
    pub fn new(tag: impl Into<String>, user_text: impl Into<String>, decoding: Decoding) -> Self {
        Self {
            system_text: String::new(),
            user_text: user_text.into(),
            temperature: decoding.temperature,
            max_tokens: decoding.max_tokens,
            request_tag: tag.into(),
        }
    }

    fn validate(&self) -> Result<(), GatewayError> {
        let bad = |reason: &str| GatewayError::InvalidRequest { tag: self.request_tag.clone(), reason: reason.into() };
        if self.user_text.is_empty() {
            return Err(bad("empty user text"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(bad("temperature must be a finite value >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(bad("max_tokens must be > 0"));
        }
        Ok(())
    }

    /// Record id prefix of the tag (everything before the first '/').
    pub fn record_id(&self) -> &str {
        self.request_tag.split('/').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

/// Decoding knobs applied to a family of calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 1.0, max_tokens: 1024 }
    }
}

/// Outcome of one backend attempt that did not produce text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    /// Retryable: transport errors, 429, 5xx.
    Transient(String),
    /// Not retried.
    Auth(String),
    /// Scripted backend ran out of responses for the tag.
    Exhausted,
    /// Not retried; surfaced as a configuration error.
    Fatal(String),
}

/// A single completion attempt. Retries, throttling and logging live in [`Gateway`].
pub trait CompletionBackend: Send + Sync {
    fn backend_id(&self) -> String;
    fn attempt(&self, request: &CompletionRequest) -> Result<String, AttemptError>;
}

/// Backend driven by a closure; convenient for tests and embedding.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, AttemptError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> CompletionBackend for FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, AttemptError> + Send + Sync,
{
    fn backend_id(&self) -> String {
        self.id.clone()
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, AttemptError> {
        (self.f)(request)
    }
}

/// Exponential backoff: `base_delay * 2^(k-1)` before retry k, scaled by a
/// jitter factor in `[1 - jitter, 1 + jitter]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, base_delay: Duration::from_secs(1), jitter: 0.2 }
    }
}

impl RetryPolicy {
    pub fn no_delay(retries: u32) -> Self {
        Self { retries, base_delay: Duration::ZERO, jitter: 0.0 }
    }

    pub fn max_attempts(&self) -> u32 {
        self.retries + 1
    }

    /// Delay before retry `k` (1-based). Jitter is seeded by the request tag.
    pub fn delay(&self, k: u32, tag: &str) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * 2f64.powi(k.saturating_sub(1) as i32);
        if nominal == 0.0 {
            return Duration::ZERO;
        }
        let mut rng = seeds::rng(seeds::derive(seeds::hash_str(tag), &[seeds::STREAM_JITTER, k as u64]));
        let factor = if self.jitter > 0.0 { rng.random_range(1.0 - self.jitter..=1.0 + self.jitter) } else { 1.0 };
        Duration::from_secs_f64(nominal * factor)
    }
}

/// Shareable completion gateway.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    log: Arc<RunLog>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.backend_id())
            .field("retry", &self.retry)
            .field("log", &self.log)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, log: Arc<RunLog>) -> Self {
        Self { backend, retry: RetryPolicy::default(), limiter: None, log }
    }

    /// Gateway over a scripted backend with an in-memory log and no retry delay.
    pub fn scripted(spec: ScriptedBackendSpec) -> Self {
        Self::new(Arc::new(ScriptedBackend::new(spec)), Arc::new(RunLog::in_memory("scripted")))
            .with_retry(RetryPolicy::no_delay(0))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Throttle calls so neither limit is exceeded; callers block until admitted.
    pub fn with_rate_limit(self, max_in_flight: usize, max_per_minute: usize) -> Self {
        self.with_limiter(RateLimiter::new(max_in_flight, max_per_minute, Duration::from_secs(60)))
    }

    pub fn with_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(Arc::new(limiter));
        self
    }

    pub fn limiter(&self) -> Option<&RateLimiter> {
        self.limiter.as_deref()
    }

    pub fn runlog(&self) -> &RunLog {
        &self.log
    }

    pub fn backend_id(&self) -> String {
        self.backend.backend_id()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let tag = &request.request_tag;
        let max_attempts = self.retry.max_attempts();
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            let permit = self.limiter.as_ref().map(|l| l.acquire());
            let started = Instant::now();
            let result = self.backend.attempt(request);
            let latency_ms = started.elapsed().as_millis() as u64;
            drop(permit);
            self.log_attempt(request, attempt, latency_ms, &result)?;
            match result {
                Ok(text) => {
                    return Ok(CompletionResponse { text, backend_id: self.backend.backend_id(), latency_ms, attempt })
                }
                Err(AttemptError::Transient(msg)) => {
                    tracing::debug!(tag = %tag, attempt, error = %msg, "transient backend failure");
                    last_error = msg;
                    if attempt < max_attempts {
                        std::thread::sleep(self.retry.delay(attempt, tag));
                    }
                }
                Err(AttemptError::Auth(msg)) => return Err(GatewayError::AuthError(msg)),
                Err(AttemptError::Exhausted) => return Err(GatewayError::ScriptedExhausted { tag: tag.clone() }),
                Err(AttemptError::Fatal(msg)) => return Err(GatewayError::Config(msg)),
            }
        }
        tracing::warn!(tag = %tag, attempts = max_attempts, "backend unavailable");
        Err(GatewayError::BackendUnavailable { tag: tag.clone(), attempts: max_attempts, last_error })
    }

    fn log_attempt(
        &self,
        request: &CompletionRequest,
        attempt: u32,
        latency_ms: u64,
        result: &Result<String, AttemptError>,
    ) -> Result<(), RunLogError> {
        let outcome = match result {
            Ok(text) => json!({ "status": "ok", "text": text }),
            Err(e) => json!({ "status": "error", "error": format!("{e:?}") }),
        };
        self.log.append(
            request.record_id(),
            "gateway",
            json!({
                "tag": request.request_tag,
                "attempt": attempt,
                "backend": self.backend.backend_id(),
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "system": request.system_text,
                "prompt": request.user_text,
                "latency_ms": latency_ms,
                "outcome": outcome,
            }),
        )
    }
}
