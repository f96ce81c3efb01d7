//! Live backend for chat-completion / embedding endpoints that follow the
//! common `/chat/completions` and `/embeddings` request schema.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, Completion, EmbedRequest, ModelBackend};
use crate::error::{Error, Result};
use crate::gateway::TokenUsage;

/// Counting semaphore bounding concurrent requests.
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().expect("permit lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("permit lock");
        }
        *n -= 1;
        PermitGuard { permits: self }
    }
}

struct PermitGuard<'a> {
    permits: &'a Permits,
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.permits.available.lock().expect("permit lock") += 1;
        self.permits.freed.notify_one();
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    retries: u32,
    permits: Permits,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f32>,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        timeout: Duration,
        retries: u32,
        max_in_flight: usize,
    ) -> HttpBackend {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            agent,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            retries,
            permits: Permits {
                available: Mutex::new(max_in_flight.max(1)),
                freed: Condvar::new(),
            },
        }
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: serde_json::Value) -> Result<T> {
        let url = format!("{}/{path}", self.endpoint);
        let _permit = self.permits.acquire();
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(500 * u64::from(attempt)));
            }
            let mut request = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            match request.send_json(&body) {
                Ok(mut response) => match response.body_mut().read_json::<T>() {
                    Ok(parsed) => return Ok(parsed),
                    Err(e) => last_error = format!("bad response body from {url}: {e}"),
                },
                Err(e) => last_error = format!("request to {url} failed: {e}"),
            }
            log::warn!("attempt {} of {}: {last_error}", attempt + 1, self.retries + 1);
        }
        Err(Error::Gateway(last_error))
    }
}

impl ModelBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<Completion> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let response: ChatResponse = self.post("chat/completions", body)?;
        let text = response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Gateway("completion carried no message content".into()))?;
        let usage = response.usage.unwrap_or_default();
        Ok(Completion {
            text,
            usage: TokenUsage::new(usage.prompt_tokens, usage.completion_tokens),
        })
    }

    fn embed(&self, request: &EmbedRequest) -> Result<(Vec<Vec<f32>>, TokenUsage)> {
        let body = json!({ "model": request.model, "input": request.input });
        let mut response: EmbeddingResponse = self.post("embeddings", body)?;
        if response.data.len() != request.input.len() {
            return Err(Error::Gateway(format!(
                "asked for {} embeddings, got {}",
                request.input.len(),
                response.data.len()
            )));
        }
        response.data.sort_by_key(|d| d.index);
        let usage = response.usage.unwrap_or_default();
        Ok((
            response.data.into_iter().map(|d| d.embedding).collect(),
            TokenUsage::new(usage.prompt_tokens, 0),
        ))
    }
}
