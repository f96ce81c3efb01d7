//! Uniform access to chat and embedding models.
//!
//! Every call goes through [`Gateway`], which picks a backend from the
//! configured [`GatewayMode`] and books token usage in a [`TokenLedger`].
//! `stub` and `replay` never touch the network, so every pipeline stage can
//! run bit-deterministically in tests.

mod cassette;
mod http;
mod ledger;
mod scripted;
mod stub;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cassette::{Cassette, CassetteEntry, EntryKind, RecordingBackend, ReplayBackend};
pub use http::HttpBackend;
pub use ledger::{TokenLedger, TokenUsage};
pub use scripted::ScriptedBackend;
pub use stub::{StubBackend, StubFallback};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn last_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait ModelBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<Completion>;

    /// Raw (not necessarily normalized) vectors, one per input, in order.
    fn embed(&self, request: &EmbedRequest) -> Result<(Vec<Vec<f32>>, TokenUsage)>;

    fn flush(&self) -> Result<()> {
        Ok(())
    }
}

/// Stable identity of a chat request: SHA-256 over its JSON form.
pub fn request_key(model: &str, temperature: f64, messages: &[ChatMessage]) -> String {
    let canonical = serde_json::json!({
        "kind": "chat",
        "model": model,
        "temperature": temperature,
        "messages": messages,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub fn embed_key(model: &str, text: &str) -> String {
    let canonical = serde_json::json!({ "kind": "embed", "model": model, "text": text });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic feature-hashing embedding: each lowercase term and each of
/// its character trigrams adds a signed unit to one bucket; the result is
/// L2-normalized. Text without terms maps to the first basis vector.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f32> {
    let dim = dim.max(1);
    let mut v = vec![0f64; dim];
    let mut bump = |feature: &str, weight: f64| {
        let h = fnv1a(feature.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[(h % dim as u64) as usize] += sign * weight;
    };
    for term in crate::text::terms(text) {
        bump(&term, 1.0);
        let padded: Vec<char> = format!("#{term}#").chars().collect();
        for tri in padded.windows(3) {
            bump(&tri.iter().collect::<String>(), 0.5);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0f32; dim];
        e[0] = 1.0;
        return e;
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}

pub fn normalize(mut v: Vec<f32>) -> Result<Vec<f32>> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Gateway("embedding has zero or non-finite norm".into()));
    }
    for x in &mut v {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Stub,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub endpoint: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_in_flight: usize,
    /// Environment variable holding the API key for live and record modes.
    pub api_key_env: String,
    /// Cassette file for record and replay modes.
    pub cassette: Option<PathBuf>,
    pub stub_embedding_dim: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: GatewayMode::Stub,
            endpoint: "https://api.openai.com/v1".into(),
            chat_model: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            temperature: 0.0,
            timeout_secs: 120,
            retries: 2,
            max_in_flight: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            cassette: None,
            stub_embedding_dim: 64,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("gateway.temperature must be >= 0".into()));
        }
        if self.retries > 5 {
            return Err(Error::Config("gateway.retries must be <= 5".into()));
        }
        if matches!(self.mode, GatewayMode::Record | GatewayMode::Replay) && self.cassette.is_none() {
            return Err(Error::Config("record and replay modes need gateway.cassette".into()));
        }
        Ok(())
    }

    fn http_backend(&self) -> HttpBackend {
        let api_key = std::env::var(&self.api_key_env).ok();
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without a key", self.api_key_env);
        }
        HttpBackend::new(
            &self.endpoint,
            api_key,
            Duration::from_secs(self.timeout_secs),
            self.retries,
            self.max_in_flight,
        )
    }
}

pub struct Gateway {
    config: GatewayConfig,
    backend: Arc<dyn ModelBackend>,
    ledger: Mutex<TokenLedger>,
}

impl Gateway {
    pub fn from_config(config: GatewayConfig) -> Result<Gateway> {
        config.validate()?;
        let backend: Arc<dyn ModelBackend> = match config.mode {
            GatewayMode::Live => Arc::new(config.http_backend()),
            GatewayMode::Stub => Arc::new(StubBackend::new(config.stub_embedding_dim)),
            GatewayMode::Record => Arc::new(RecordingBackend::new(
                Box::new(config.http_backend()),
                config.cassette.clone().expect("validated"),
            )?),
            GatewayMode::Replay => {
                Arc::new(ReplayBackend::open(config.cassette.as_ref().expect("validated"))?)
            }
        };
        Ok(Gateway::with_backend(config, backend))
    }

    /// Uses `backend` regardless of `config.mode`; model ids and temperature
    /// still come from `config`.
    pub fn with_backend(config: GatewayConfig, backend: Arc<dyn ModelBackend>) -> Gateway {
        Gateway {
            config,
            backend,
            ledger: Mutex::new(TokenLedger::default()),
        }
    }

    pub fn stub() -> Gateway {
        Gateway::with_backend(GatewayConfig::default(), Arc::new(StubBackend::new(64)))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn chat(&self, label: &str, messages: &[ChatMessage]) -> Result<Completion> {
        let request = ChatRequest {
            model: self.config.chat_model.clone(),
            temperature: self.config.temperature,
            messages: messages.to_vec(),
        };
        let completion = self.backend.chat(&request)?;
        self.ledger.lock().expect("ledger lock").record(label, completion.usage);
        Ok(completion)
    }

    /// Unit-normalized embeddings, one per text.
    pub fn embed(&self, label: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Err(Error::InvalidArgument("embed needs at least one text".into()));
        }
        let request = EmbedRequest {
            model: self.config.embedding_model.clone(),
            input: texts.to_vec(),
        };
        let (vectors, usage) = self.backend.embed(&request)?;
        if vectors.len() != texts.len() {
            return Err(Error::Gateway(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        self.ledger.lock().expect("ledger lock").record(label, usage);
        vectors.into_iter().map(normalize).collect()
    }

    pub fn ledger(&self) -> TokenLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    /// Writes any pending cassette recordings.
    pub fn flush(&self) -> Result<()> {
        self.backend.flush()
    }
}
