//! Provider-agnostic chat-completion gateway.
//!
//! Every LLM-backed stage goes through [`Gateway::complete`]. The gateway runs
//! in one of three modes:
//!
//! - `live`: forward the request to the configured [`Provider`].
//! - `record`: forward, then write the reply to the fixture store under the
//!   request's [`FixtureKey`].
//! - `replay`: answer from the fixture store only; a missing fixture is a
//!   [`GatewayError::ReplayMiss`]. No network access happens in this mode.
//!
//! Fixture keys hash the temperature and the ordered messages. The request
//! `label` and `max_tokens` are not part of the key.

mod fixtures;
mod provider;
mod repair;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;

pub use fixtures::{Fixture, FixtureStore};
pub use provider::{OpenAiCompatProvider, Provider, ProviderError, ScriptedProvider};
pub use repair::{complete_with_repair, strip_code_fence, RepairOutcome};

/// Default sampling temperature for generator and judge stages.
pub const GENERATOR_TEMPERATURE: f64 = 0.0;
/// Default sampling temperature for robot conversation turns.
pub const CONVERSATION_TEMPERATURE: f64 = 0.7;

const UNIT_SEPARATOR: char = '\u{1f}';
const RECORD_SEPARATOR: char = '\u{1e}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Pipeline stage name, e.g. `refine.suggestions`.
    pub label: String,
}

impl CompletionRequest {
    pub fn new(label: impl Into<String>, temperature: f64, messages: Vec<ChatMessage>) -> Self {
        Self { messages, temperature, max_tokens: 1024, label: label.into() }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must not be empty".into()));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if let Some(m) = self.messages.iter().find(|m| m.role != Role::Assistant && m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("empty content in {} message", m.role.as_str())));
        }
        let first_system = self.messages.iter().position(|m| m.role == Role::System);
        let first_assistant = self.messages.iter().position(|m| m.role == Role::Assistant);
        if let Some(a) = first_assistant {
            match first_system {
                Some(s) if s < a => {}
                _ => {
                    return Err(GatewayError::InvalidRequest(
                        "a system message must precede the first assistant message".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// The part of a request that determines its fixture key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalRequest {
    /// Temperature with exactly three decimals.
    pub temperature: String,
    pub messages: Vec<ChatMessage>,
}

impl CanonicalRequest {
    pub fn from_request(request: &CompletionRequest) -> Self {
        // -0.0 and 0.0 must agree
        let t = if request.temperature == 0.0 { 0.0 } else { request.temperature };
        Self { temperature: format!("{t:.3}"), messages: request.messages.clone() }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut s = self.temperature.clone();
        for m in &self.messages {
            s.push_str(m.role.as_str());
            s.push(UNIT_SEPARATOR);
            s.push_str(&m.content);
            s.push(RECORD_SEPARATOR);
        }
        s.into_bytes()
    }

    pub fn key(&self) -> FixtureKey {
        FixtureKey(hex::encode(Sha256::digest(self.to_bytes())))
    }
}

/// Lowercase hex SHA-256 of the canonical request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureKey(String);

impl FixtureKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for FixtureKey {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(Self(s.to_string()))
        } else {
            Err(GatewayError::InvalidRequest(format!("not a fixture key: {s}")))
        }
    }
}

impl fmt::Display for FixtureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_key(request: &CompletionRequest) -> FixtureKey {
    CanonicalRequest::from_request(request).key()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl FromStr for Mode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(GatewayError::Config(format!("unknown LLM mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no recorded fixture for request digest {digest}")]
    ReplayMiss { digest: FixtureKey },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("fixture store: {0}")]
    Fixture(String),
}

/// Connection settings, usually read from `ACE_LLM_*` environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub base_url: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub fixtures_dir: PathBuf,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self { mode: Mode::Replay, base_url: None, api_key: None, model: None, fixtures_dir: PathBuf::from("fixtures") }
    }
}

impl GatewayConfig {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.openai.com/v1";
    pub const DEFAULT_MODEL: &'static str = "gpt-4.1-mini";
}

pub struct Gateway {
    mode: Mode,
    provider: Option<Arc<dyn Provider>>,
    fixtures: Option<FixtureStore>,
    clock: Arc<dyn Clock>,
    calls: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("has_provider", &self.provider.is_some())
            .field("fixtures", &self.fixtures.as_ref().map(|s| s.dir().to_path_buf()))
            .finish()
    }
}

impl Gateway {
    pub fn live(provider: Arc<dyn Provider>, clock: Arc<dyn Clock>) -> Self {
        Self { mode: Mode::Live, provider: Some(provider), fixtures: None, clock, calls: AtomicU64::new(0) }
    }

    pub fn record(provider: Arc<dyn Provider>, fixtures: FixtureStore, clock: Arc<dyn Clock>) -> Self {
        Self { mode: Mode::Record, provider: Some(provider), fixtures: Some(fixtures), clock, calls: AtomicU64::new(0) }
    }

    pub fn replay(fixtures: FixtureStore, clock: Arc<dyn Clock>) -> Self {
        Self { mode: Mode::Replay, provider: None, fixtures: Some(fixtures), clock, calls: AtomicU64::new(0) }
    }

    /// Builds a gateway from configuration, wiring the HTTP provider for
    /// live and record modes.
    pub fn from_config(config: &GatewayConfig, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        match config.mode {
            Mode::Replay => Ok(Self::replay(FixtureStore::new(&config.fixtures_dir), clock)),
            Mode::Live | Mode::Record => {
                let api_key = config.api_key.clone().filter(|k| !k.is_empty()).ok_or_else(|| {
                    GatewayError::Config(format!("ACE_LLM_API_KEY is required in {} mode", config.mode))
                })?;
                let provider = OpenAiCompatProvider::new(
                    config.base_url.clone().unwrap_or_else(|| GatewayConfig::DEFAULT_BASE_URL.into()),
                    api_key,
                    config.model.clone().unwrap_or_else(|| GatewayConfig::DEFAULT_MODEL.into()),
                )?;
                let provider: Arc<dyn Provider> = Arc::new(provider);
                if config.mode == Mode::Live {
                    Ok(Self::live(provider, clock))
                } else {
                    let store = FixtureStore::new(&config.fixtures_dir);
                    store.ensure_dir()?;
                    Ok(Self::record(provider, store, clock))
                }
            }
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of `complete` calls issued so far, including failed ones.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.validate()?;
        match self.mode {
            Mode::Live => {
                let reply = self.provider()?.send(request)?;
                Ok(reply)
            }
            Mode::Record => {
                let reply = self.provider()?.send(request)?;
                let canonical = CanonicalRequest::from_request(request);
                let key = canonical.key();
                let fixture = Fixture { request: canonical, reply: reply.clone(), recorded_at: self.clock.now() };
                self.fixtures()?.put(&key, &fixture)?;
                tracing::debug!(label = %request.label, %key, "recorded fixture");
                Ok(reply)
            }
            Mode::Replay => {
                let key = canonical_key(request);
                match self.fixtures()?.get(&key)? {
                    Some(fixture) => Ok(fixture.reply),
                    None => {
                        tracing::debug!(label = %request.label, %key, "replay miss");
                        Err(GatewayError::ReplayMiss { digest: key })
                    }
                }
            }
        }
    }

    fn provider(&self) -> Result<&Arc<dyn Provider>, GatewayError> {
        self.provider
            .as_ref()
            .ok_or_else(|| GatewayError::Config(format!("no provider configured for {} mode", self.mode)))
    }

    fn fixtures(&self) -> Result<&FixtureStore, GatewayError> {
        self.fixtures
            .as_ref()
            .ok_or_else(|| GatewayError::Config(format!("no fixture store configured for {} mode", self.mode)))
    }
}
