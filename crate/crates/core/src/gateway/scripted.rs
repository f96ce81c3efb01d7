use super::{hash_embedding, ChatRequest, Completion, EmbedRequest, ModelBackend};
use crate::error::{Error, Result};
use crate::gateway::TokenUsage;
use crate::text::count_tokens;

type Rule = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// A rule-driven stand-in for a live model, used to author fixtures: wrap it
/// in a recording gateway and the replies it computes land in a cassette.
/// Rules are tried in registration order; the first `Some` wins.
pub struct ScriptedBackend {
    rules: Vec<Rule>,
    dim: usize,
}

impl ScriptedBackend {
    pub fn new(dim: usize) -> ScriptedBackend {
        ScriptedBackend { rules: Vec::new(), dim }
    }

    pub fn rule<F>(mut self, f: F) -> ScriptedBackend
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.rules.push(Box::new(f));
        self
    }
}

impl ModelBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest) -> Result<Completion> {
        let text = self
            .rules
            .iter()
            .find_map(|rule| rule(request))
            .ok_or_else(|| {
                let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
                Error::Gateway(format!(
                    "no scripted reply for request ending in {:?}",
                    last.chars().take(80).collect::<String>()
                ))
            })?;
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
