//! Shared JSON-over-HTTP plumbing for the remote providers: bounded retries
//! with exponential backoff on transient failures.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Retry behavior for provider calls: up to `max_attempts` tries with delays
/// of `initial_delay * backoff_factor^k` between them. Transport errors,
/// 429, and 5xx are retried; other statuses return immediately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay_ms: u64,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_delay_ms: 1000,
            backoff_factor: 2.0,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let ms = self.initial_delay_ms as f64 * self.backoff_factor.powi(attempt as i32);
        Duration::from_millis(ms as u64)
    }
}

#[derive(Debug, Error)]
pub enum HttpError {
    /// All attempts failed with transport-level or retryable errors.
    #[error("provider unreachable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    /// The provider answered with a non-retryable error status.
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
}

fn is_retryable_status(status: u16) -> bool {
    status == 429 || status >= 500
}

/// POST a JSON body, returning the parsed JSON response. A bearer token is
/// attached when `api_key` is set.
pub fn post_json_with_retries(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
    policy: &RetryPolicy,
) -> Result<serde_json::Value, HttpError> {
    let mut last_error = String::from("no attempt made");
    for attempt in 0..policy.max_attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(policy.delay(attempt - 1));
        }
        let mut request = client.post(url).json(body);
        if let Some(key) = api_key {
            request = request.bearer_auth(key);
        }
        match request.send() {
            Ok(response) => {
                let status = response.status().as_u16();
                let text = response.text().unwrap_or_default();
                if status < 300 {
                    return serde_json::from_str(&text).map_err(|e| HttpError::Status {
                        status,
                        body: format!("unparseable JSON response: {e}"),
                    });
                }
                if is_retryable_status(status) {
                    last_error = format!("status {status}: {text}");
                    continue;
                }
                return Err(HttpError::Status { status, body: text });
            }
            Err(e) => {
                last_error = e.to_string();
            }
        }
    }
    Err(HttpError::Unavailable {
        attempts: policy.max_attempts.max(1),
        last_error,
    })
}

/// Read an API key from the configured environment variable, if any.
pub fn api_key_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}
