use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tokio::sync::{OnceCell, Semaphore};

use super::{ChatExchange, ChatRequest, ModelProfile, Protocol, ResponseCache, DEFAULT_PARALLELISM};

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV: &str = "FAITHCHECK_API_KEY";

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum InferenceError {
    #[error("user message is empty")]
    EmptyMessage,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
}

impl InferenceError {
    fn retryable(&self) -> bool {
        match self {
            InferenceError::Transport(_) | InferenceError::Timeout => true,
            InferenceError::Status { status, .. } => *status == 429 || *status >= 500,
            InferenceError::EmptyMessage | InferenceError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 5, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

type Slot = Arc<OnceCell<String>>;

/// Sends requests for one model profile. Identical in-flight requests are
/// collapsed into one network call, and completed responses are served from
/// memory or the disk cache without taking an in-flight slot.
pub struct InferenceClient {
    http: reqwest::Client,
    profile: ModelProfile,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    api_key: Option<String>,
    permits: Arc<Semaphore>,
    slots: Mutex<HashMap<String, Slot>>,
    network_calls: AtomicU64,
}

impl InferenceClient {
    pub fn new(profile: ModelProfile) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("default HTTP client builds");
        InferenceClient {
            http,
            profile,
            cache: None,
            retry: RetryPolicy::default(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            permits: Arc::new(Semaphore::new(DEFAULT_PARALLELISM)),
            slots: Mutex::new(HashMap::new()),
            network_calls: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.http = reqwest::Client::builder().timeout(timeout).build().expect("HTTP client builds");
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    /// Sets the in-flight window. Values below 1 are raised to 1.
    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.permits = Arc::new(Semaphore::new(parallelism.max(1)));
        self
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    /// HTTP attempts made so far, retries included.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn slot(&self, key: &str) -> Slot {
        let mut slots = self.slots.lock().expect("slot map poisoned");
        slots.entry(key.to_string()).or_default().clone()
    }

    /// Runs one request through memo, cache and network.
    pub async fn exchange(&self, request: ChatRequest) -> ChatExchange {
        let started = Instant::now();
        let key = request.cache_key();
        let mut from_cache = true;
        let response = if request.user_message.trim().is_empty() {
            Err(InferenceError::EmptyMessage.to_string())
        } else {
            let slot = self.slot(&key);
            if let Some(text) = slot.get() {
                Ok(text.clone())
            } else {
                let fetched = slot
                    .get_or_try_init(|| async {
                        if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
                            return Ok(text);
                        }
                        from_cache = false;
                        let _permit = self.permits.acquire().await.expect("semaphore never closed");
                        let text = self.fetch_with_retry(&request).await?;
                        if let Some(cache) = &self.cache {
                            if let Err(e) = cache.put(&request, &text) {
                                tracing::warn!(error = %e, "failed to write cache entry");
                            }
                        }
                        Ok::<_, InferenceError>(text)
                    })
                    .await;
                fetched.cloned().map_err(|e| e.to_string())
            }
        };
        ChatExchange { request, cache_key: key, response, latency_ms: started.elapsed().as_millis() as u64, from_cache }
    }

    /// Returns only the response text.
    pub async fn complete(&self, request: ChatRequest) -> Result<String, String> {
        self.exchange(request).await.response
    }

    /// Runs every request, at most the configured number in flight, and
    /// returns exchanges in input order.
    pub async fn run_batch(&self, requests: Vec<ChatRequest>) -> Vec<ChatExchange> {
        futures::future::join_all(requests.into_iter().map(|r| self.exchange(r))).await
    }

    async fn fetch_with_retry(&self, request: &ChatRequest) -> Result<String, InferenceError> {
        let mut attempt = 0;
        loop {
            match self.fetch_once(request).await {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && attempt < self.retry.max_retries => {
                    let delay = self.retry.delay(attempt);
                    tracing::debug!(error = %e, attempt, ?delay, "retrying request");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn url(&self) -> String {
        let base = self.profile.endpoint.trim_end_matches('/');
        let path = match self.profile.protocol {
            Protocol::ChatCompletions => "/v1/chat/completions",
            Protocol::RawGenerate => "/generate",
        };
        if base.ends_with(path) {
            base.to_string()
        } else {
            format!("{base}{path}")
        }
    }

    async fn fetch_once(&self, request: &ChatRequest) -> Result<String, InferenceError> {
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let body = request_body(self.profile.protocol, request);
        let mut builder = self.http.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().await.map_err(transport_error)?;
        let status = resp.status();
        let text = resp.text().await.map_err(transport_error)?;
        if !status.is_success() {
            let body: String = text.chars().take(BODY_EXCERPT).collect();
            return Err(InferenceError::Status { status: status.as_u16(), body });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| InferenceError::Malformed(e.to_string()))?;
        response_text(self.profile.protocol, &value)
    }
}

fn transport_error(e: reqwest::Error) -> InferenceError {
    if e.is_timeout() {
        InferenceError::Timeout
    } else {
        InferenceError::Transport(e.to_string())
    }
}

/// Builds the JSON body for `protocol`.
pub fn request_body(protocol: Protocol, request: &ChatRequest) -> Value {
    let p = &request.params;
    match protocol {
        Protocol::ChatCompletions => {
            let mut messages = Vec::new();
            if let Some(system) = &request.system_prompt {
                messages.push(json!({"role": "system", "content": system}));
            }
            messages.push(json!({"role": "user", "content": request.user_message}));
            json!({
                "model": request.model_name,
                "messages": messages,
                "temperature": p.temperature,
                "top_p": p.top_p,
                "top_k": p.top_k,
                "repetition_penalty": p.repetition_penalty,
                "seed": p.seed,
                "max_tokens": p.max_new_tokens,
            })
        }
        Protocol::RawGenerate => {
            let inputs = match &request.system_prompt {
                Some(system) => format!("{system}\nUser: {}\nAssistant:", request.user_message),
                None => request.user_message.clone(),
            };
            json!({
                "inputs": inputs,
                "parameters": {
                    "temperature": p.temperature,
                    "top_p": p.top_p,
                    "top_k": p.top_k,
                    "repetition_penalty": p.repetition_penalty,
                    "seed": p.seed,
                    "max_new_tokens": p.max_new_tokens,
                    "do_sample": true,
                    "return_full_text": false,
                },
            })
        }
    }
}

fn response_text(protocol: Protocol, value: &Value) -> Result<String, InferenceError> {
    let found = match protocol {
        Protocol::ChatCompletions => value.pointer("/choices/0/message/content").and_then(Value::as_str),
        Protocol::RawGenerate => value
            .get("generated_text")
            .or_else(|| value.pointer("/0/generated_text"))
            .and_then(Value::as_str),
    };
    found.map(str::to_string).ok_or_else(|| {
        let excerpt: String = value.to_string().chars().take(BODY_EXCERPT).collect();
        InferenceError::Malformed(format!("no response text in {excerpt}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::GenerationParams;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_retries: 10, base_delay: Duration::from_millis(100), max_delay: Duration::from_secs(1) };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(800));
        assert_eq!(p.delay(4), Duration::from_secs(1));
        assert_eq!(p.delay(40), Duration::from_secs(1));
    }

    #[test]
    fn retry_classification() {
        assert!(InferenceError::Timeout.retryable());
        assert!(InferenceError::Status { status: 503, body: String::new() }.retryable());
        assert!(InferenceError::Status { status: 429, body: String::new() }.retryable());
        assert!(!InferenceError::Status { status: 400, body: String::new() }.retryable());
        assert!(!InferenceError::Malformed(String::new()).retryable());
    }

    #[test]
    fn chat_body_carries_every_parameter() {
        let mut profile = ModelProfile::new("http://x", "m");
        profile.system_prompt = Some("sys".into());
        let body = request_body(Protocol::ChatCompletions, &profile.request("hi", GenerationParams::default()));
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hi");
        assert_eq!(body["temperature"], 0.1);
        assert_eq!(body["top_p"], 0.95);
        assert_eq!(body["top_k"], 50);
        assert_eq!(body["repetition_penalty"], 1.2);
        assert_eq!(body["seed"], 0);
        assert_eq!(body["max_tokens"], 1024);
    }

    #[test]
    fn generate_body_and_response_shapes() {
        let profile = ModelProfile::new("http://x", "m").with_protocol(Protocol::RawGenerate);
        let body = request_body(Protocol::RawGenerate, &profile.request("hi", GenerationParams::default()));
        assert_eq!(body["inputs"], "hi");
        assert_eq!(body["parameters"]["max_new_tokens"], 1024);
        assert_eq!(response_text(Protocol::RawGenerate, &json!({"generated_text": "a"})).unwrap(), "a");
        assert_eq!(response_text(Protocol::RawGenerate, &json!([{"generated_text": "b"}])).unwrap(), "b");
        assert!(response_text(Protocol::ChatCompletions, &json!({"choices": []})).is_err());
    }

    #[test]
    fn url_is_not_doubled() {
        let c = InferenceClient::new(ModelProfile::new("http://h:1/", "m"));
        assert_eq!(c.url(), "http://h:1/v1/chat/completions");
        let c = InferenceClient::new(ModelProfile::new("http://h:1/v1/chat/completions", "m"));
        assert_eq!(c.url(), "http://h:1/v1/chat/completions");
    }
}
