//! Text and multimodal completions with record/replay cassettes.
//!
//! Requests use the chat-completions wire shape. In `replay` mode the
//! gateway answers only from its cassette; in `record` mode cassette hits
//! are served locally and misses go to the backend and are appended.

mod cassette;
mod http;
mod imitation;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, Exchange};
pub use http::HttpBackend;
pub use imitation::{imitate_plan, imitate_rewrite, ImitationBackend};

use crate::prompt::PromptBundle;

pub const API_KEY_ENV: &str = "ROBOMP_API_KEY";
/// Requests above this many bytes are refused before sending.
pub const MAX_PAYLOAD_BYTES: usize = 20 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("CassetteMiss({0})")]
    CassetteMiss(String),
    #[error("http status {status}: {body}")]
    HttpError { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("payload of {0} bytes is too large")]
    PayloadTooLarge(usize),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("no backend configured for {0} mode")]
    NoBackend(LlmMode),
}

impl GatewayError {
    pub fn name(&self) -> &'static str {
        match self {
            GatewayError::CassetteMiss(_) => "CassetteMiss",
            GatewayError::HttpError { .. } => "HttpError",
            GatewayError::Timeout => "Timeout",
            GatewayError::PayloadTooLarge(_) => "PayloadTooLarge",
            GatewayError::Transport(_) => "Transport",
            GatewayError::BadResponse(_) => "BadResponse",
            GatewayError::Cassette(_) => "Cassette",
            GatewayError::NoBackend(_) => "NoBackend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Replay,
    Record,
}

impl fmt::Display for LlmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LlmMode::Live => "live",
            LlmMode::Replay => "replay",
            LlmMode::Record => "record",
        })
    }
}

impl FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(LlmMode::Live),
            "replay" => Ok(LlmMode::Replay),
            "record" => Ok(LlmMode::Record),
            other => Err(format!("unknown llm mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn new(model: &str, temperature: f64, text: &str, png: Option<&[u8]>) -> Self {
        let mut content = vec![ContentPart::Text { text: text.to_string() }];
        if let Some(png) = png {
            let b64 = base64::engine::general_purpose::STANDARD.encode(png);
            content.push(ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: format!("data:image/png;base64,{b64}"),
                },
            });
        }
        Self {
            model: model.to_string(),
            temperature,
            messages: vec![Message {
                role: "user".into(),
                content,
            }],
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            for p in &m.content {
                if let ContentPart::Text { text } = p {
                    out.push_str(text);
                }
            }
        }
        out
    }

    /// Decoded bytes of the first image part, if any.
    pub fn image(&self) -> Option<Vec<u8>> {
        self.messages.iter().flat_map(|m| &m.content).find_map(|p| match p {
            ContentPart::ImageUrl { image_url } => {
                let b64 = image_url.url.split_once(',').map_or(image_url.url.as_str(), |(_, b)| b);
                base64::engine::general_purpose::STANDARD.decode(b64).ok()
            }
            ContentPart::Text { .. } => None,
        })
    }

    /// SHA-256 over the canonical JSON of `{model, text, image_sha256, temperature}`.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            model: &'a str,
            text: String,
            image_sha256: Option<String>,
            temperature: f64,
        }
        let canonical = Canonical {
            model: &self.model,
            text: self.text(),
            image_sha256: self.image().map(|b| hex::encode(Sha256::digest(b))),
            temperature: self.temperature,
        };
        let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Something that answers chat requests.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError>;
}

pub struct GeneratorGateway {
    pub mode: LlmMode,
    pub model: String,
    pub temperature: f64,
    cassette: Option<Cassette>,
    backend: Option<Box<dyn CompletionBackend>>,
    backend_calls: AtomicUsize,
}

impl GeneratorGateway {
    pub fn new(
        mode: LlmMode,
        model: impl Into<String>,
        cassette: Option<Cassette>,
        backend: Option<Box<dyn CompletionBackend>>,
    ) -> Self {
        Self {
            mode,
            model: model.into(),
            temperature: 0.0,
            cassette,
            backend,
            backend_calls: AtomicUsize::new(0),
        }
    }

    /// Replay-only gateway over a cassette file.
    pub fn replay(model: impl Into<String>, path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let cassette = Cassette::load(path)?;
        Ok(Self::new(LlmMode::Replay, model, Some(cassette), None))
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn cassette(&self) -> Option<&Cassette> {
        self.cassette.as_ref()
    }

    /// Requests that reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    fn call_backend(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend(self.mode))?;
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        backend.complete(req)
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let hash = req.hash();
        match self.mode {
            LlmMode::Live => self.call_backend(req),
            LlmMode::Replay => self
                .cassette
                .as_ref()
                .and_then(|c| c.lookup(&hash))
                .ok_or(GatewayError::CassetteMiss(hash)),
            LlmMode::Record => {
                let cassette = self
                    .cassette
                    .as_ref()
                    .ok_or_else(|| GatewayError::Cassette("record mode needs a cassette".into()))?;
                if let Some(hit) = cassette.lookup(&hash) {
                    return Ok(hit);
                }
                let answer = self.call_backend(req)?;
                cassette.record(req, &answer)?;
                Ok(answer)
            }
        }
    }

    pub fn complete_text(&self, prompt: &str) -> Result<String, GatewayError> {
        self.complete(&ChatRequest::new(&self.model, self.temperature, prompt, None))
    }

    pub fn complete_multimodal(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        self.complete(&self.multimodal_request(bundle))
    }

    pub fn multimodal_request(&self, bundle: &PromptBundle) -> ChatRequest {
        ChatRequest::new(&self.model, self.temperature, &bundle.text, bundle.image.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl CompletionBackend for Echo {
        fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
            Ok(format!("echo:{}", req.text()))
        }
    }

    #[test]
    fn wire_shape() {
        let r = ChatRequest::new("m", 0.0, "hi", None);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["messages"][0]["content"].as_array().unwrap().len(), 1);
        assert_eq!(v["messages"][0]["content"][0]["type"], "text");
        let r = ChatRequest::new("m", 0.0, "hi", Some(b"\x89PNG"));
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["messages"][0]["content"][1]["type"], "image_url");
        assert!(v["messages"][0]["content"][1]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/png;base64,"));
        assert_eq!(r.image().unwrap(), b"\x89PNG");
    }

    #[test]
    fn hash_covers_semantics() {
        let a = ChatRequest::new("m", 0.0, "hi", None);
        assert_eq!(a.hash(), ChatRequest::new("m", 0.0, "hi", None).hash());
        assert_ne!(a.hash(), ChatRequest::new("m", 0.5, "hi", None).hash());
        assert_ne!(a.hash(), ChatRequest::new("n", 0.0, "hi", None).hash());
        assert_ne!(a.hash(), ChatRequest::new("m", 0.0, "hi", Some(b"x")).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn replay_miss_and_record_hit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let rec = GeneratorGateway::new(
            LlmMode::Record,
            "m",
            Some(Cassette::open(&path).unwrap()),
            Some(Box::new(Echo)),
        );
        assert_eq!(rec.complete_text("a").unwrap(), "echo:a");
        assert_eq!(rec.complete_text("a").unwrap(), "echo:a");
        assert_eq!(rec.backend_calls(), 1);

        let replay = GeneratorGateway::replay("m", &path).unwrap();
        assert_eq!(replay.complete_text("a").unwrap(), "echo:a");
        let miss = replay.complete_text("b").unwrap_err();
        assert_eq!(miss.name(), "CassetteMiss");
        assert_eq!(replay.backend_calls(), 0);
    }
}
