use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, GenerationParams};
use crate::hash::{sha256_hex, sha256_parts};

/// Completions replayed by [`ScriptedMock`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Script {
    /// Returned in call order.
    Sequence(Vec<String>),
    /// Keyed by the SHA-256 hex digest of the prompt.
    Keyed(BTreeMap<String, String>),
}

/// Replays a fixed script. Running past its end is a configuration error.
pub struct ScriptedMock {
    id: String,
    script: Script,
    cursor: Mutex<usize>,
}

impl ScriptedMock {
    pub fn new(id: impl Into<String>, script: Script) -> Self {
        ScriptedMock {
            id: id.into(),
            script,
            cursor: Mutex::new(0),
        }
    }

    pub fn sequence<S: Into<String>>(id: &str, items: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            id,
            Script::Sequence(items.into_iter().map(Into::into).collect()),
        )
    }
}

impl Backend for ScriptedMock {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        prompt: &str,
        _params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        match &self.script {
            Script::Sequence(items) => {
                let mut cursor = self.cursor.lock().expect("mock cursor poisoned");
                let item = items.get(*cursor).ok_or_else(|| {
                    BackendError::Fatal(format!(
                        "script exhausted after {} completions",
                        items.len()
                    ))
                })?;
                *cursor += 1;
                Ok(Completion::new(item.trim_end()))
            }
            Script::Keyed(map) => {
                let key = sha256_hex(prompt.as_bytes());
                map.get(&key)
                    .map(|c| Completion::new(c.trim_end()))
                    .ok_or_else(|| {
                        BackendError::Fatal(format!("no scripted completion for prompt {key}"))
                    })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Fixed(String),
    /// Pseudo-random choice, seeded by the mock seed, the prompt and how many
    /// times this prompt has been seen.
    OneOf {
        one_of: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    /// Every substring must occur in the prompt.
    pub contains: Vec<String>,
    pub reply: Reply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMockConfig {
    #[serde(default)]
    pub rules: Vec<Rule>,
    pub default: Reply,
    #[serde(default)]
    pub seed: u64,
}

/// First matching rule wins; otherwise `default`.
pub struct RuleMock {
    id: String,
    config: RuleMockConfig,
    seen: Mutex<HashMap<String, u64>>,
}

impl RuleMock {
    pub fn new(id: impl Into<String>, config: RuleMockConfig) -> Self {
        RuleMock {
            id: id.into(),
            config,
            seen: Mutex::new(HashMap::new()),
        }
    }

    fn pick(&self, reply: &Reply, prompt: &str) -> Result<String, BackendError> {
        match reply {
            Reply::Fixed(s) => Ok(s.clone()),
            Reply::OneOf { one_of } => {
                if one_of.is_empty() {
                    return Err(BackendError::Fatal("one_of reply has no options".into()));
                }
                let prompt_key = sha256_hex(prompt.as_bytes());
                let occurrence = {
                    let mut seen = self.seen.lock().expect("mock state poisoned");
                    let n = seen.entry(prompt_key).or_insert(0);
                    *n += 1;
                    *n - 1
                };
                let digest = sha256_parts([
                    &self.config.seed.to_le_bytes()[..],
                    prompt.as_bytes(),
                    &occurrence.to_le_bytes()[..],
                ]);
                let bits = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
                Ok(one_of[(bits % one_of.len() as u64) as usize].clone())
            }
        }
    }
}

impl Backend for RuleMock {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        prompt: &str,
        _params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let reply = self
            .config
            .rules
            .iter()
            .find(|r| r.contains.iter().all(|s| prompt.contains(s.as_str())))
            .map(|r| &r.reply)
            .unwrap_or(&self.config.default);
        self.pick(reply, prompt)
            .map(|s| Completion::new(s.trim_end()))
    }
}
