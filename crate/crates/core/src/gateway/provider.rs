//! Provider adapters behind the gateway.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use super::{CompletionRequest, GatewayError};

#[derive(Debug, Clone, Error)]
#[error("provider error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
pub struct ProviderError {
    pub status: Option<u16>,
    pub message: String,
}

impl ProviderError {
    pub fn transport(message: impl Into<String>) -> Self {
        Self { status: None, message: message.into() }
    }
}

pub trait Provider: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

/// Chat-completions over HTTP in the widely used `/chat/completions` shape.
pub struct OpenAiCompatProvider {
    endpoint: String,
    api_key: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl OpenAiCompatProvider {
    pub fn new(base_url: String, api_key: String, model: String) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        let endpoint = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Ok(Self { endpoint, api_key, model, client })
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

impl Provider for OpenAiCompatProvider {
    fn send(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ProviderError::transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError { status: Some(status.as_u16()), message: text });
        }
        let parsed: ChatCompletionResponse = serde_json::from_str(&text).map_err(|e| ProviderError {
            status: Some(status.as_u16()),
            message: format!("unexpected response body: {e}"),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| ProviderError { status: Some(status.as_u16()), message: "no choices".into() })
    }
}

/// Serves pre-written replies per request label, in order. Used to author
/// fixtures offline and to script failure cases in tests.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
    log: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, label: &str, reply: impl Into<String>) {
        self.queues.lock().unwrap().entry(label.to_string()).or_default().push_back(reply.into());
    }

    pub fn extend<I, S>(&self, label: &str, replies: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for r in replies {
            self.push(label, r);
        }
    }

    /// Replies not yet consumed, per label.
    pub fn remaining(&self) -> HashMap<String, usize> {
        self.queues.lock().unwrap().iter().filter(|(_, q)| !q.is_empty()).map(|(l, q)| (l.clone(), q.len())).collect()
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl Provider for ScriptedProvider {
    fn send(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.log.lock().unwrap().push(request.clone());
        self.queues
            .lock()
            .unwrap()
            .get_mut(&request.label)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| ProviderError::transport(format!("no scripted reply left for {}", request.label)))
    }
}
