//! Text-generation backends.
//!
//! [`BackendDescriptor`] is the serializable configuration; [`Backend`] the
//! runtime interface. The HTTP backend speaks the OpenAI-compatible
//! chat-completions protocol. The mocks are deterministic and perform no I/O.

mod http;
mod mock;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;

pub use http::{HttpChat, HttpChatConfig};
pub use mock::{Reply, Rule, RuleMock, RuleMockConfig, Script, ScriptedMock};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Network, auth or rate-limit failure; worth retrying.
    #[error("transient backend error: {0}")]
    Transient(String),
    /// Misconfiguration, exhausted script or a rejected request.
    #[error("backend configuration error: {0}")]
    Fatal(String),
    #[error("prompt is empty")]
    EmptyPrompt,
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
}

fn default_true() -> bool {
    true
}
fn default_max_new_tokens() -> u32 {
    2000
}
fn default_repeats() -> u32 {
    1
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            deterministic: true,
            max_new_tokens: default_max_new_tokens(),
            repeats: default_repeats(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be positive".into());
        }
        if self.repeats == 0 {
            return Err("repeats must be positive".into());
        }
        Ok(())
    }

    /// The fields that influence a single completion (repeats does not).
    pub fn cache_key(&self) -> String {
        format!("det={};max={}", self.deterministic, self.max_new_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    /// Caveats about the call, e.g. a provider without determinism controls.
    pub warnings: Vec<String>,
}

impl Completion {
    pub fn new(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            warnings: Vec::new(),
        }
    }
}

pub trait Backend: Send + Sync {
    /// Stable identifier of the configuration, used in cache keys.
    fn id(&self) -> &str;

    fn generate(&self, prompt: &str, params: &GenerationParams)
        -> Result<Completion, BackendError>;

    /// Reachability check used by validation.
    fn probe(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    HttpChat(HttpChatConfig),
    ScriptedMock { script: Script },
    RuleMock(RuleMockConfig),
}

impl BackendDescriptor {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendDescriptor::HttpChat(_) => "http_chat",
            BackendDescriptor::ScriptedMock { .. } => "scripted_mock",
            BackendDescriptor::RuleMock(_) => "rule_mock",
        }
    }

    /// `<kind>-<hash>`, derived from the whole configuration.
    pub fn backend_id(&self) -> String {
        let canonical = serde_json::to_value(self).expect("descriptor serializes");
        let digest = sha256_hex(canonical.to_string().as_bytes());
        format!("{}-{}", self.kind(), &digest[..16])
    }

    pub fn is_network(&self) -> bool {
        matches!(self, BackendDescriptor::HttpChat(_))
    }

    pub fn build(&self) -> Result<Box<dyn Backend>, BackendError> {
        let id = self.backend_id();
        Ok(match self {
            BackendDescriptor::HttpChat(cfg) => Box::new(HttpChat::new(id, cfg.clone())?),
            BackendDescriptor::ScriptedMock { script } => {
                Box::new(ScriptedMock::new(id, script.clone()))
            }
            BackendDescriptor::RuleMock(cfg) => Box::new(RuleMock::new(id, cfg.clone())),
        })
    }
}

/// Keyed-script helper: maps prompt hashes to completions.
pub fn keyed_script(pairs: impl IntoIterator<Item = (String, String)>) -> Script {
    Script::Keyed(
        pairs
            .into_iter()
            .map(|(prompt, completion)| (sha256_hex(prompt.as_bytes()), completion))
            .collect::<BTreeMap<_, _>>(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_id_tracks_configuration() {
        let a = BackendDescriptor::ScriptedMock {
            script: Script::Sequence(vec!["a".into()]),
        };
        let b = BackendDescriptor::ScriptedMock {
            script: Script::Sequence(vec!["b".into()]),
        };
        assert_eq!(a.backend_id(), a.clone().backend_id());
        assert_ne!(a.backend_id(), b.backend_id());
        assert!(a.backend_id().starts_with("scripted_mock-"));

        let h1 = BackendDescriptor::HttpChat(HttpChatConfig::new("http://x/v1", "m1"));
        let h2 = BackendDescriptor::HttpChat(HttpChatConfig::new("http://x/v1", "m2"));
        let h3 = BackendDescriptor::HttpChat(HttpChatConfig::new("http://y/v1", "m1"));
        assert_ne!(h1.backend_id(), h2.backend_id());
        assert_ne!(h1.backend_id(), h3.backend_id());
    }

    #[test]
    fn descriptor_json_shape() {
        let d: BackendDescriptor = serde_json::from_str(
            r#"{"kind":"rule_mock","rules":[{"contains":["WIN"],"reply":"YES"}],"default":"NO"}"#,
        )
        .unwrap();
        assert_eq!(d.kind(), "rule_mock");
        let d: BackendDescriptor =
            serde_json::from_str(r#"{"kind":"scripted_mock","script":["a","b"]}"#).unwrap();
        assert!(matches!(
            d,
            BackendDescriptor::ScriptedMock {
                script: Script::Sequence(_)
            }
        ));
        let d: BackendDescriptor = serde_json::from_str(
            r#"{"kind":"http_chat","endpoint":"http://localhost:8000/v1","model":"m"}"#,
        )
        .unwrap();
        assert!(d.is_network());
    }

    #[test]
    fn params_defaults() {
        let p: GenerationParams = serde_json::from_str("{}").unwrap();
        assert_eq!(p, GenerationParams::default());
        assert_eq!(p.max_new_tokens, 2000);
        assert!(p.deterministic);
        assert!(GenerationParams {
            max_new_tokens: 0,
            ..p
        }
        .validate()
        .is_err());
        assert!(GenerationParams { repeats: 0, ..p }.validate().is_err());
    }
}
