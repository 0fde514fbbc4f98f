use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Behavior, Reply};

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid script JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("entry {index}: invalid regex: {source}")]
    Regex { index: usize, source: regex::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchSpec {
    Exact(String),
    Tagged(TaggedMatch),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaggedMatch {
    Exact(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Failures {
    Count(u32),
    Always(AlwaysTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlwaysTag {
    Always,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: MatchSpec,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failures: Option<Failures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

impl ScriptEntry {
    pub fn exact(message: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry { matcher: MatchSpec::Exact(message.into()), response: response.into(), failures: None, latency_ms: None }
    }

    pub fn regex(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: MatchSpec::Tagged(TaggedMatch::Regex(pattern.into())),
            response: response.into(),
            failures: None,
            latency_ms: None,
        }
    }

    pub fn failing(mut self, failures: Failures) -> Self {
        self.failures = Some(failures);
        self
    }

    pub fn with_latency(mut self, ms: u64) -> Self {
        self.latency_ms = Some(ms);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Spec(ScriptSpec),
    Bare(Vec<ScriptEntry>),
}

enum Compiled {
    Exact(String),
    Regex(Regex),
}

/// A compiled script. The first entry whose matcher accepts the user message
/// answers it; failure injections are counted per entry.
pub struct Script {
    default: Option<String>,
    entries: Vec<(Compiled, ScriptEntry, AtomicU32)>,
}

impl Script {
    pub fn new(spec: ScriptSpec) -> Result<Self, ScriptError> {
        let mut entries = Vec::with_capacity(spec.entries.len());
        for (index, entry) in spec.entries.into_iter().enumerate() {
            let compiled = match &entry.matcher {
                MatchSpec::Exact(s) | MatchSpec::Tagged(TaggedMatch::Exact(s)) => Compiled::Exact(s.clone()),
                MatchSpec::Tagged(TaggedMatch::Regex(p)) => {
                    Compiled::Regex(Regex::new(p).map_err(|source| ScriptError::Regex { index, source })?)
                }
            };
            entries.push((compiled, entry, AtomicU32::new(0)));
        }
        Ok(Script { default: spec.default, entries })
    }

    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let spec = match serde_json::from_str::<ScriptFile>(text)? {
            ScriptFile::Spec(s) => s,
            ScriptFile::Bare(entries) => ScriptSpec { default: None, entries },
        };
        Script::new(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io { path: path.display().to_string(), source })?;
        Script::from_json(&text)
    }
}

impl Behavior for Script {
    fn respond(&self, user_message: &str) -> Reply {
        for (compiled, entry, failed) in &self.entries {
            let hit = match compiled {
                Compiled::Exact(s) => s == user_message,
                Compiled::Regex(re) => re.is_match(user_message),
            };
            if !hit {
                continue;
            }
            let latency = Duration::from_millis(entry.latency_ms.unwrap_or(0));
            let fail = match entry.failures {
                None => false,
                Some(Failures::Always(_)) => true,
                Some(Failures::Count(n)) => failed.fetch_add(1, Ordering::SeqCst) < n,
            };
            return if fail {
                Reply::fail(503, "scripted failure").after(latency)
            } else {
                Reply::text(&entry.response).after(latency)
            };
        }
        match &self.default {
            Some(text) => Reply::text(text),
            None => Reply::fail(404, "no script entry matches the prompt"),
        }
    }
}
