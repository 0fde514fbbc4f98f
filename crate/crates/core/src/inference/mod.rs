//! Request types, the on-disk response cache and the HTTP client.

mod cache;
mod client;

pub use cache::ResponseCache;
pub use client::{InferenceClient, InferenceError, RetryPolicy, API_KEY_ENV};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default system prompt of the Falcon chat models.
pub const FALCON_SYSTEM_PROMPT: &str = "The following is a conversation between a highly knowledgeable and intelligent AI assistant, called Falcon, and a human user, called User. In the following interactions, User and Falcon will converse in natural language, and Falcon will answer User's questions. Falcon was built to be respectful, polite and inclusive. Falcon was built by the Technology Innovation Institute in Abu Dhabi. Falcon will never decline to answer a question, and always attempts to give an answer that User would be satisfied with. It knows a lot, and always tells the truth. The conversation begins.";

pub const DEFAULT_PARALLELISM: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub top_k: u32,
    pub seed: u64,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { temperature: 0.1, top_p: 0.95, repetition_penalty: 1.2, top_k: 50, seed: 0, max_new_tokens: 1024 }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be a non-negative number, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        if !(self.repetition_penalty.is_finite() && self.repetition_penalty >= 1.0) {
            return Err(format!("repetition_penalty must be at least 1, got {}", self.repetition_penalty));
        }
        if self.top_k == 0 {
            return Err("top_k must be positive".into());
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be positive".into());
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    ChatCompletions,
    RawGenerate,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "chat-completions" | "chat" | "openai" => Ok(Protocol::ChatCompletions),
            "raw-generate" | "generate" | "tgi" => Ok(Protocol::RawGenerate),
            other => Err(format!("unknown protocol \"{other}\" (expected chat-completions or raw-generate)")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::ChatCompletions => "chat-completions",
            Protocol::RawGenerate => "raw-generate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub protocol: Protocol,
}

impl ModelProfile {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelProfile { endpoint: endpoint.into(), model_name: model_name.into(), system_prompt: None, protocol: Protocol::default() }
    }

    /// A profile with the system prompt policy for the model family: Falcon
    /// models get their default system prompt, everything else none.
    pub fn for_model(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        let mut profile = ModelProfile::new(endpoint, model_name);
        if profile.model_name.to_ascii_lowercase().contains("falcon") {
            profile.system_prompt = Some(FALCON_SYSTEM_PROMPT.to_string());
        }
        profile
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn request(&self, user_message: impl Into<String>, params: GenerationParams) -> ChatRequest {
        ChatRequest {
            system_prompt: self.system_prompt.clone(),
            user_message: user_message.into(),
            params,
            model_name: self.model_name.clone(),
        }
    }
}

/// A single-turn request. Every exchange starts a fresh conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: Option<String>,
    pub user_message: String,
    pub params: GenerationParams,
    pub model_name: String,
}

impl ChatRequest {
    /// Hex SHA-256 over a length-prefixed encoding of every request field.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |tag: &str, bytes: &[u8]| {
            h.update(tag.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field("model", self.model_name.as_bytes());
        match &self.system_prompt {
            Some(s) => field("system", s.as_bytes()),
            None => field("no-system", b""),
        }
        field("user", self.user_message.as_bytes());
        let p = &self.params;
        field("temperature", &p.temperature.to_bits().to_le_bytes());
        field("top_p", &p.top_p.to_bits().to_le_bytes());
        field("repetition_penalty", &p.repetition_penalty.to_bits().to_le_bytes());
        field("top_k", &p.top_k.to_le_bytes());
        field("seed", &p.seed.to_le_bytes());
        field("max_new_tokens", &p.max_new_tokens.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// The result of one request: a response or, after retries, an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub cache_key: String,
    pub response: Result<String, String>,
    pub latency_ms: u64,
    pub from_cache: bool,
}

impl ChatExchange {
    pub fn text(&self) -> Option<&str> {
        self.response.as_deref().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ChatRequest {
        ModelProfile::new("http://x", "m").request("hello", GenerationParams::default())
    }

    #[test]
    fn defaults_match_reference_parameters() {
        let p = GenerationParams::default();
        assert_eq!((p.temperature, p.top_p, p.repetition_penalty, p.top_k, p.seed, p.max_new_tokens), (0.1, 0.95, 1.2, 50, 0, 1024));
        assert!(p.validate().is_ok());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let ok = GenerationParams::default();
        assert!(GenerationParams { top_p: 0.0, ..ok }.validate().is_err());
        assert!(GenerationParams { top_p: 1.5, ..ok }.validate().is_err());
        assert!(GenerationParams { repetition_penalty: 0.9, ..ok }.validate().is_err());
        assert!(GenerationParams { top_k: 0, ..ok }.validate().is_err());
        assert!(GenerationParams { max_new_tokens: 0, ..ok }.validate().is_err());
        assert!(GenerationParams { temperature: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn system_prompt_policy_by_family() {
        assert!(ModelProfile::for_model("e", "meta-llama/Llama-2-70b-chat-hf").system_prompt.is_none());
        assert!(ModelProfile::for_model("e", "mistralai/Mistral-7B-Instruct-v0.1").system_prompt.is_none());
        assert_eq!(ModelProfile::for_model("e", "tiiuae/falcon-40b-instruct").system_prompt.as_deref(), Some(FALCON_SYSTEM_PROMPT));
    }

    #[test]
    fn identical_requests_share_a_key() {
        assert_eq!(base().cache_key(), base().cache_key());
        assert_eq!(base().cache_key().len(), 64);
    }

    #[test]
    fn no_system_prompt_differs_from_empty_one() {
        let mut with_empty = base();
        with_empty.system_prompt = Some(String::new());
        assert_ne!(base().cache_key(), with_empty.cache_key());
    }

    #[test]
    fn field_boundaries_are_unambiguous() {
        let mut a = base();
        a.model_name = "ab".into();
        a.user_message = "c".into();
        let mut b = base();
        b.model_name = "a".into();
        b.user_message = "bc".into();
        assert_ne!(a.cache_key(), b.cache_key());
    }

    #[test]
    fn protocol_names() {
        assert_eq!("tgi".parse::<Protocol>(), Ok(Protocol::RawGenerate));
        assert_eq!("chat-completions".parse::<Protocol>(), Ok(Protocol::ChatCompletions));
        assert!("grpc".parse::<Protocol>().is_err());
    }
}
