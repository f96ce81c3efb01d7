use std::collections::HashMap;

use super::{hash_embedding, request_key, ChatMessage, ChatRequest, Completion, EmbedRequest, ModelBackend};
use crate::error::{Error, Result};
use crate::gateway::TokenUsage;
use crate::text::count_tokens;

/// What the stub answers when no fixture matches a request.
#[derive(Debug, Clone, PartialEq)]
pub enum StubFallback {
    /// An empty JSON object; structured parsers read it as "nothing found".
    Empty,
    /// The same canned text for every request.
    Fixed(String),
    /// Fail with `FixtureMissing`.
    Miss,
}

/// Offline backend: canned replies keyed by a hash of the request messages,
/// feature-hashing embeddings of a fixed dimension.
pub struct StubBackend {
    fixtures: HashMap<String, String>,
    fallback: StubFallback,
    dim: usize,
}

impl StubBackend {
    pub fn new(dim: usize) -> StubBackend {
        StubBackend {
            fixtures: HashMap::new(),
            fallback: StubFallback::Empty,
            dim,
        }
    }

    pub fn with_fallback(mut self, fallback: StubFallback) -> StubBackend {
        self.fallback = fallback;
        self
    }

    /// Registers `reply` for the exact message list (model and temperature
    /// are not part of the stub key).
    pub fn with_fixture(mut self, messages: &[ChatMessage], reply: impl Into<String>) -> StubBackend {
        self.fixtures.insert(request_key("stub", 0.0, messages), reply.into());
        self
    }
}

impl ModelBackend for StubBackend {
    fn chat(&self, request: &ChatRequest) -> Result<Completion> {
        let key = request_key("stub", 0.0, &request.messages);
        let text = match self.fixtures.get(&key) {
            Some(text) => text.clone(),
            None => match &self.fallback {
                StubFallback::Empty => "{}".to_string(),
                StubFallback::Fixed(text) => text.clone(),
                StubFallback::Miss => return Err(Error::FixtureMissing(key)),
            },
        };
        let prompt: usize = request.messages.iter().map(|m| count_tokens(&m.content)).sum();
        let usage = TokenUsage::new(prompt as u64, count_tokens(&text) as u64);
        Ok(Completion { text, usage })
    }

    fn embed(&self, request: &EmbedRequest) -> Result<(Vec<Vec<f32>>, TokenUsage)> {
        let vectors = request.input.iter().map(|t| hash_embedding(t, self.dim)).collect();
        let tokens: usize = request.input.iter().map(|t| count_tokens(t)).sum();
        Ok((vectors, TokenUsage::new(tokens as u64, 0)))
    }
}
