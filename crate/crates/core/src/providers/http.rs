//! OpenAI-compatible HTTP backends (`/chat/completions`, `/embeddings`).
//!
//! Requests are retried on transport errors, 429 and 5xx with exponential
//! backoff; other 4xx statuses fail immediately. In-flight requests across all
//! clients sharing a [`ConcurrencyLimit`] are capped.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EmbeddingVector, Embedder, GenerationRequest, Generator, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further attempt.
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 1000,
            timeout_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, failed_attempts: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1 << failed_attempts.saturating_sub(1).min(16)))
    }
}

/// Counting semaphore capping concurrent live requests.
#[derive(Debug, Clone)]
pub struct ConcurrencyLimit {
    inner: Arc<(Mutex<usize>, Condvar)>,
}

impl ConcurrencyLimit {
    pub fn new(max_in_flight: usize) -> Self {
        Self {
            inner: Arc::new((Mutex::new(max_in_flight.max(1)), Condvar::new())),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let (lock, cvar) = &*self.inner;
        let mut free = lock.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = cvar.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit { limit: self }
    }
}

struct Permit<'a> {
    limit: &'a ConcurrencyLimit,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let (lock, cvar) = &*self.limit.inner;
        *lock.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        cvar.notify_one();
    }
}

/// Where and how to reach one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Endpoint {
    fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

struct HttpClient {
    endpoint: Endpoint,
    retry: RetryPolicy,
    limit: ConcurrencyLimit,
    agent: ureq::Agent,
}

impl HttpClient {
    fn new(endpoint: Endpoint, retry: RetryPolicy, limit: ConcurrencyLimit) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(retry.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            retry,
            limit,
            agent,
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let _permit = self.limit.acquire();
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = self.endpoint.api_key() {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("malformed response body: {e}"))),
            429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}: {}", truncate(&text)))),
            _ => Err(Failure::Fatal(format!("HTTP {status}: {}", truncate(&text)))),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = self.endpoint.url(path);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(message)) => {
                    return Err(ProviderError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Failure::Retryable(message)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(ProviderError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    log::warn!("{url}: attempt {attempt} failed ({message}); retrying");
                    thread::sleep(self.retry.backoff(attempt));
                }
            }
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub struct HttpGenerator {
    client: HttpClient,
}

impl HttpGenerator {
    pub fn new(endpoint: Endpoint, retry: RetryPolicy, limit: ConcurrencyLimit) -> Self {
        Self {
            client: HttpClient::new(endpoint, retry, limit),
        }
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        let mut messages = Vec::new();
        if !req.prompt.system.trim().is_empty() {
            messages.push(json!({"role": "system", "content": req.prompt.system}));
        }
        messages.push(json!({"role": "user", "content": req.prompt.user}));
        let body = json!({
            "model": self.client.endpoint.model,
            "messages": messages,
            "max_tokens": req.max_output,
            "temperature": req.temperature,
        });
        let value = self.client.post("chat/completions", &body)?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Transport {
                attempts: 1,
                message: "response has no choices[0].message.content".into(),
            })?;
        if content.trim().is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(content.to_string())
    }
}

pub struct HttpEmbedder {
    client: HttpClient,
    dims: usize,
    id: String,
}

impl HttpEmbedder {
    pub fn new(endpoint: Endpoint, dims: usize, retry: RetryPolicy, limit: ConcurrencyLimit) -> Self {
        let id = format!("http/{}/{dims}", endpoint.model);
        Self {
            client: HttpClient::new(endpoint, retry, limit),
            dims,
            id,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let body = json!({"model": self.client.endpoint.model, "input": text});
        let value = self.client.post("embeddings", &body)?;
        let values: Vec<f32> = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).map(|x| x as f32).collect())
            .ok_or_else(|| ProviderError::Transport {
                attempts: 1,
                message: "response has no data[0].embedding".into(),
            })?;
        if values.len() != self.dims {
            return Err(ProviderError::DimensionMismatch {
                left: self.dims,
                right: values.len(),
            });
        }
        EmbeddingVector::normalized(values)
    }
}
