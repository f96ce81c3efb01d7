//! JSON-lines cassettes: one recorded model interaction per line, sorted by
//! request key so that re-recording the same interactions yields the same
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{embed_key, request_key, ChatRequest, Completion, EmbedRequest, ModelBackend};
use crate::error::{Error, Result};
use crate::gateway::TokenUsage;
use crate::text::count_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Chat,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub kind: EntryKind,
    /// Start of the last message (or the embedded text), for humans.
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
}

fn summarize(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(96).collect()
}

impl Cassette {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CassetteEntry> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, entry: CassetteEntry) {
        self.entries.insert(entry.key.clone(), entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }

    pub fn parse(text: &str) -> Result<Cassette> {
        let mut cassette = Cassette::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line).map_err(|e| {
                Error::CorruptStore(format!("cassette line {}: {e}", lineno + 1))
            })?;
            cassette.insert(entry);
        }
        Ok(cassette)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Cassette> {
        Cassette::parse(&fs::read_to_string(path)?)
    }

    /// Loads `path`, or starts empty when the file does not exist yet.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Cassette> {
        if path.as_ref().exists() {
            Cassette::load(path)
        } else {
            Ok(Cassette::default())
        }
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(parent) = path.as_ref().parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }
}

/// Forwards to an inner backend and keeps every exchange for the cassette.
pub struct RecordingBackend {
    inner: Box<dyn ModelBackend>,
    cassette: Mutex<Cassette>,
    path: PathBuf,
}

impl RecordingBackend {
    /// Appends to the cassette at `path` if it already exists.
    pub fn new(inner: Box<dyn ModelBackend>, path: impl Into<PathBuf>) -> Result<RecordingBackend> {
        let path = path.into();
        let cassette = Cassette::load_or_default(&path)?;
        Ok(RecordingBackend {
            inner,
            cassette: Mutex::new(cassette),
            path,
        })
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().expect("cassette lock").clone()
    }
}

impl ModelBackend for RecordingBackend {
    fn chat(&self, request: &ChatRequest) -> Result<Completion> {
        let completion = self.inner.chat(request)?;
        let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        self.cassette.lock().expect("cassette lock").insert(CassetteEntry {
            key: request_key(&request.model, request.temperature, &request.messages),
            kind: EntryKind::Chat,
            summary: summarize(last),
            text: Some(completion.text.clone()),
            vector: None,
            prompt_tokens: completion.usage.prompt_tokens,
            completion_tokens: completion.usage.completion_tokens,
        });
        Ok(completion)
    }

    fn embed(&self, request: &EmbedRequest) -> Result<(Vec<Vec<f32>>, TokenUsage)> {
        let (vectors, usage) = self.inner.embed(request)?;
        let mut cassette = self.cassette.lock().expect("cassette lock");
        for (text, vector) in request.input.iter().zip(&vectors) {
            cassette.insert(CassetteEntry {
                key: embed_key(&request.model, text),
                kind: EntryKind::Embed,
                summary: summarize(text),
                text: None,
                vector: Some(vector.clone()),
                prompt_tokens: count_tokens(text) as u64,
                completion_tokens: 0,
            });
        }
        Ok((vectors, usage))
    }

    fn flush(&self) -> Result<()> {
        self.cassette.lock().expect("cassette lock").save(&self.path)
    }
}

impl Drop for RecordingBackend {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::error!("failed to write cassette {}: {e}", self.path.display());
        }
    }
}

/// Serves only what a cassette holds; anything else is `FixtureMissing`.
pub struct ReplayBackend {
    cassette: Cassette,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> ReplayBackend {
        ReplayBackend { cassette }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<ReplayBackend> {
        Ok(ReplayBackend::new(Cassette::load(path)?))
    }
}

impl ModelBackend for ReplayBackend {
    fn chat(&self, request: &ChatRequest) -> Result<Completion> {
        let key = request_key(&request.model, request.temperature, &request.messages);
        let entry = self.cassette.get(&key).ok_or_else(|| {
            let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
            Error::FixtureMissing(format!("{key} ({})", summarize(last)))
        })?;
        let text = entry
            .text
            .clone()
            .ok_or_else(|| Error::CorruptStore(format!("cassette entry {key} has no text")))?;
        Ok(Completion {
            text,
            usage: TokenUsage::new(entry.prompt_tokens, entry.completion_tokens),
        })
    }

    fn embed(&self, request: &EmbedRequest) -> Result<(Vec<Vec<f32>>, TokenUsage)> {
        let mut vectors = Vec::with_capacity(request.input.len());
        let mut usage = TokenUsage::default();
        for text in &request.input {
            let key = embed_key(&request.model, text);
            let entry = self
                .cassette
                .get(&key)
                .ok_or_else(|| Error::FixtureMissing(format!("{key} (embed {})", summarize(text))))?;
            let vector = entry
                .vector
                .clone()
                .ok_or_else(|| Error::CorruptStore(format!("cassette entry {key} has no vector")))?;
            vectors.push(vector);
            usage += TokenUsage::new(entry.prompt_tokens, entry.completion_tokens);
        }
        Ok((vectors, usage))
    }
}
