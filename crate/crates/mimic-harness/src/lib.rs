//! Evaluation harness: runs a manifest against a chat-completions
//! endpoint with images attached, persists raw responses incrementally,
//! and resumes interrupted runs.
//!
//! Wire format: one POST per query to `{base_url}/chat/completions` with
//! body `{"model", "user": query_id, "temperature", "max_tokens",
//! "messages": [{"role": "user", "content": [image parts..., text part]}]}`.
//! Images are base64 data URIs in manifest order ahead of the prompt
//! text; the `user` field carries the query id so runs can be correlated
//! server-side. The answer is read from `choices[0].message.content`.
//!
//! Error classes: `timeout` (request timed out), `rate_limited` (HTTP
//! 429), `server` (HTTP 5xx or transport failure), `malformed`
//! (unbuildable request, non-429 4xx, or a response that is not a chat
//! completion). Timeouts, rate limits, and server errors are retried
//! with exponential backoff; malformed responses are not.
//!
//! A run directory holds `run_config.json`, an append-only
//! `records.jsonl` (one [`RunRecord`] per query), and `summary.json`.
//! Resume reads the record file and requests only missing query ids.

mod client;
mod runner;
pub mod testing;

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use runner::{read_records, run_eval, RunSummary};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const CONFIG_FILE: &str = "run_config.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug)]
pub enum HarnessError {
    /// Configuration or environment problem detected before any request.
    Startup(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Startup(msg) => write!(f, "startup error: {msg}"),
            HarnessError::Io { path, source } => {
                write!(f, "io error on {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for HarnessError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Base delay; attempt n sleeps `base * 2^(n-1)`.
    #[serde(with = "duration_ms")]
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub max_concurrent: usize,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            auth_env: None,
            max_concurrent: 4,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            max_tokens: 256,
            temperature: 0.0,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.max_concurrent == 0 {
            return Err(HarnessError::Startup("max_concurrent must be >= 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(HarnessError::Startup("timeout must be positive".into()));
        }
        Ok(())
    }
}

mod duration_ms {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = u64::deserialize(d)?;
        Ok(Duration::from_millis(ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    None,
    Timeout,
    RateLimited,
    Server,
    Malformed,
}

impl ErrorClass {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorClass::None => "none",
            ErrorClass::Timeout => "timeout",
            ErrorClass::RateLimited => "rate_limited",
            ErrorClass::Server => "server",
            ErrorClass::Malformed => "malformed",
        }
    }

    fn retryable(&self) -> bool {
        matches!(
            self,
            ErrorClass::Timeout | ErrorClass::RateLimited | ErrorClass::Server
        )
    }
}

/// Outcome of one query: exactly one record per query per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    /// FNV-1a digest of the request payload; recomputable from the
    /// manifest plus the endpoint config.
    pub digest: String,
    pub response: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub error: ErrorClass,
}
