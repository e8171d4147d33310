use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, Completion, GenerationParams};
use crate::hash::sha256_hex;

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// False for providers that reject temperature/seed controls.
    #[serde(default = "default_true")]
    pub supports_determinism: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// When set, request and response bodies are written here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}
fn default_timeout() -> u64 {
    300
}

impl HttpChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpChatConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            supports_determinism: true,
            seed: None,
            system: None,
            timeout_secs: default_timeout(),
            audit_dir: None,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct HttpChat {
    id: String,
    config: HttpChatConfig,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(id: impl Into<String>, config: HttpChatConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        Ok(HttpChat {
            id: id.into(),
            config,
            client,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn api_key(&self) -> Result<Option<String>, BackendError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::Fatal(format!("environment variable {var} is not set"))),
        }
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "max_tokens": params.max_new_tokens,
            "stream": false,
        });
        if params.deterministic && self.config.supports_determinism {
            body["temperature"] = json!(0.0);
            if let Some(seed) = self.config.seed {
                body["seed"] = json!(seed);
            }
        }
        body
    }

    fn audit(&self, tag: &str, body: &str) {
        if let Some(dir) = &self.config.audit_dir {
            let name = format!("{}-{tag}.json", &sha256_hex(body.as_bytes())[..16]);
            if let Err(e) =
                std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(name), body))
            {
                log::warn!("audit write failed: {e}");
            }
        }
    }
}

fn classify_status(status: reqwest::StatusCode, body: &str) -> BackendError {
    let msg = format!(
        "HTTP {status}: {}",
        body.chars().take(500).collect::<String>()
    );
    if status.as_u16() == 401
        || status.as_u16() == 403
        || status.as_u16() == 408
        || status.as_u16() == 429
        || status.is_server_error()
    {
        BackendError::Transient(msg)
    } else {
        BackendError::Fatal(msg)
    }
}

impl Backend for HttpChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let body = self.request_body(prompt, params).to_string();
        self.audit("request", &body);
        let mut req = self
            .client
            .post(self.url("chat/completions"))
            .header("content-type", "application/json")
            .body(body);
        if let Some(key) = self.api_key()? {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        self.audit("response", &text);
        if !status.is_success() {
            return Err(classify_status(status, &text));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Fatal(format!("unexpected response body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal("response has no message content".into()))?;

        let mut completion = Completion::new(content.trim_end());
        if params.deterministic && !self.config.supports_determinism {
            completion.warnings.push(format!(
                "model {} lacks determinism controls; outputs may vary between runs",
                self.config.model
            ));
        }
        Ok(completion)
    }

    fn probe(&self) -> Result<(), BackendError> {
        let mut req = self.client.get(self.url("models"));
        if let Some(key) = self.api_key()? {
            req = req.bearer_auth(key);
        }
        // any HTTP answer means the server is reachable
        req.send()
            .map(|_| ())
            .map_err(|e| BackendError::Transient(format!("endpoint unreachable: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// One-shot HTTP server; returns the base URL and a receiver for the request body.
    fn serve_once(
        status: &'static str,
        response: &'static str,
    ) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(String::from_utf8(body).unwrap()).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response}",
                response.len()
            )
            .unwrap();
        });
        (format!("http://{addr}/v1"), rx)
    }

    #[test]
    fn sends_chat_request_and_parses_reply() {
        let (url, rx) = serve_once(
            "200 OK",
            r#"{"choices":[{"index":0,"message":{"role":"assistant","content":"YES \n"}}]}"#,
        );
        let backend = HttpChat::new("h", HttpChatConfig::new(url, "tiny")).unwrap();
        let out = backend
            .generate("prompt text", &GenerationParams::default())
            .unwrap();
        assert_eq!(out.text, "YES");
        assert!(out.warnings.is_empty());

        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["model"], "tiny");
        assert_eq!(sent["max_tokens"], 2000);
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "prompt text");
    }

    #[test]
    fn rate_limit_is_transient() {
        let (url, _rx) = serve_once(
            "429 Too Many Requests",
            r#"{"error":{"message":"slow down"}}"#,
        );
        let backend = HttpChat::new("h", HttpChatConfig::new(url, "tiny")).unwrap();
        let err = backend
            .generate("p", &GenerationParams::default())
            .unwrap_err();
        assert!(err.is_transient(), "{err:?}");
    }

    #[test]
    fn bad_request_is_fatal() {
        let (url, _rx) = serve_once(
            "400 Bad Request",
            r#"{"error":{"message":"context too long"}}"#,
        );
        let backend = HttpChat::new("h", HttpChatConfig::new(url, "tiny")).unwrap();
        let err = backend
            .generate("p", &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, BackendError::Fatal(_)));
    }

    #[test]
    fn missing_determinism_controls_warns() {
        let (url, rx) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"NO"}}]}"#,
        );
        let mut cfg = HttpChatConfig::new(url, "test-model");
        cfg.supports_determinism = false;
        cfg.system = Some("sys".into());
        let backend = HttpChat::new("h", cfg).unwrap();
        let out = backend.generate("p", &GenerationParams::default()).unwrap();
        assert_eq!(out.warnings.len(), 1);
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert!(sent.get("temperature").is_none());
        assert_eq!(sent["messages"][0]["role"], "system");
    }

    #[test]
    fn unreachable_endpoint_is_transient() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        drop(listener);
        let backend = HttpChat::new("h", HttpChatConfig::new(url, "m")).unwrap();
        assert!(backend
            .generate("p", &GenerationParams::default())
            .unwrap_err()
            .is_transient());
        assert!(backend.probe().is_err());
    }
}
