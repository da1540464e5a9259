use std::thread;
use std::time::Duration;

use log::warn;
use serde::Deserialize;

use super::{ChatRequest, CompletionBackend, GatewayError, API_KEY_ENV, MAX_PAYLOAD_BYTES};

/// POSTs to `{endpoint}/chat/completions` with bounded exponential backoff.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    pub max_retries: u32,
    pub base_delay: Duration,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl HttpBackend {
    /// Reads the key from `ROBOMP_API_KEY` when present.
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self::with_key(endpoint, std::env::var(API_KEY_ENV).ok(), timeout)
    }

    pub fn with_key(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key,
            client,
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }

    fn attempt(&self, body: &[u8]) -> Result<String, GatewayError> {
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .header("content-type", "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        if status == 413 {
            return Err(GatewayError::PayloadTooLarge(body.len()));
        }
        if !(200..300).contains(&status) {
            let body = resp.text().unwrap_or_default();
            return Err(GatewayError::HttpError { status, body });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::BadResponse("no choices".into()))
    }
}

fn transient(e: &GatewayError) -> bool {
    match e {
        GatewayError::Timeout | GatewayError::Transport(_) => true,
        GatewayError::HttpError { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let body = serde_json::to_vec(req).expect("request serializes");
        if body.len() > MAX_PAYLOAD_BYTES {
            return Err(GatewayError::PayloadTooLarge(body.len()));
        }
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if transient(&e) && tries < self.max_retries => {
                    let delay = self.base_delay * 2u32.pow(tries);
                    warn!("completion failed ({e}); retry {} in {delay:?}", tries + 1);
                    thread::sleep(delay);
                    tries += 1;
                }
                other => return other,
            }
        }
    }
}
