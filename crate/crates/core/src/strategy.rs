//! Query strategy: the control block a model derives from each question.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, Gateway};
use crate::hypergraph::Layer;
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntity {
    pub canonical: String,
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub question: String,
    pub rewrite_question: String,
    pub key_entities: Vec<KeyEntity>,
    pub keywords: Vec<String>,
    pub target_layer: Layer,
    /// How much of the answer the target layer alone is expected to cover, 1..=5.
    pub matching_score: i64,
    /// Estimated reasoning depth, 1..=5.
    pub semantic_depth: i64,
}

impl Strategy {
    /// What a query runs with when no strategy can be parsed.
    pub fn fallback(query: &str) -> Strategy {
        Strategy {
            question: query.to_string(),
            rewrite_question: query.to_string(),
            key_entities: Vec::new(),
            keywords: vec![query.to_string()],
            target_layer: Layer::Entity,
            matching_score: 3,
            semantic_depth: 2,
        }
    }

    pub fn depth(&self) -> usize {
        self.semantic_depth as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedStrategy {
    pub strategy: Strategy,
    pub warnings: Vec<String>,
    /// True when every attempt failed and the defaults were used.
    pub fallback: bool,
    pub raw: String,
}

const FIELDS: [&str; 7] = [
    "rewrite_question",
    "question",
    "key_entities",
    "keywords",
    "target_layer",
    "matching_score",
    "semantic_depth",
];

static LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?im)(?:^|[\s,*])(?:\d+\.\s*)?\**({})\**\s*:",
        FIELDS.join("|")
    ))
    .expect("label pattern")
});

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+").expect("int pattern"));

fn strip_list(value: &str) -> &str {
    let v = value.trim().trim_end_matches(',').trim();
    v.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(v)
}

fn clean_item(item: &str) -> String {
    item.trim()
        .trim_matches(|c| c == '"' || c == '\'' || c == '`')
        .trim()
        .to_string()
}

fn entity_group(group: &str) -> Option<KeyEntity> {
    let mut names = group.split('|').map(clean_item).filter(|s| !s.is_empty());
    let canonical = names.next()?;
    Some(KeyEntity { canonical, aliases: names.collect() })
}

fn fields_from_labels(reply: &str) -> BTreeMap<String, String> {
    let hits: Vec<(usize, usize, String)> = LABEL
        .captures_iter(reply)
        .map(|c| {
            let whole = c.get(0).expect("match");
            (whole.start(), whole.end(), c[1].to_ascii_lowercase())
        })
        .collect();
    let mut fields = BTreeMap::new();
    for (i, (_, end, name)) in hits.iter().enumerate() {
        let stop = hits.get(i + 1).map_or(reply.len(), |h| h.0);
        let value = reply[*end..stop].trim().trim_end_matches(',').trim().to_string();
        fields.entry(name.clone()).or_insert(value);
    }
    fields
}

fn json_value_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(json_value_text).collect();
            format!("[{}]", parts.join(", "))
        }
        other => other.to_string(),
    }
}

/// Flat fields plus the two list fields when they came as JSON arrays.
type JsonFields = (BTreeMap<String, String>, Option<Vec<KeyEntity>>, Option<Vec<String>>);

fn fields_from_json(reply: &str) -> Option<JsonFields> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(reply.get(start..=end)?).ok()?;
    let mut fields = BTreeMap::new();
    let mut entities = None;
    let mut keywords = None;
    for (k, v) in &obj {
        let name = k.trim().to_ascii_lowercase().replace(' ', "_");
        match (name.as_str(), v) {
            // arrays keep commas inside names intact
            ("key_entities", serde_json::Value::Array(items)) => {
                entities = Some(
                    items
                        .iter()
                        .filter_map(|it| match it {
                            serde_json::Value::Array(names) => {
                                entity_group(&names.iter().map(json_value_text).collect::<Vec<_>>().join("|"))
                            }
                            other => entity_group(&json_value_text(other)),
                        })
                        .collect(),
                );
            }
            ("keywords", serde_json::Value::Array(items)) => {
                keywords = Some(
                    items
                        .iter()
                        .map(|it| clean_item(&json_value_text(it)))
                        .filter(|s| !s.is_empty())
                        .collect(),
                );
            }
            _ => {
                fields.insert(name, json_value_text(v));
            }
        }
    }
    Some((fields, entities, keywords))
}

fn bounded(
    fields: &BTreeMap<String, String>,
    name: &str,
    lo: i64,
    hi: i64,
    warnings: &mut Vec<String>,
) -> std::result::Result<i64, String> {
    let raw = fields.get(name).ok_or_else(|| format!("missing field {name}"))?;
    let n: i64 = INTEGER
        .find(raw)
        .and_then(|m| m.as_str().parse().ok())
        .ok_or_else(|| format!("field {name} is not an integer: {raw:?}"))?;
    if !(lo..=hi).contains(&n) {
        let clamped = n.clamp(lo, hi);
        let msg = format!("{name}={n} outside {lo}..={hi}, clamped to {clamped}");
        warn!("{msg}");
        warnings.push(msg);
        return Ok(clamped);
    }
    Ok(n)
}

/// Parses a strategy reply, either a JSON object or `label: value` fields.
/// Out-of-range integers are clamped and reported in the returned warnings.
pub fn parse_strategy_reply(query: &str, reply: &str) -> Result<(Strategy, Vec<String>)> {
    let failure = |reason: String| Error::ParseFailure { reason, raw: reply.to_string() };
    let (fields, json_entities, json_keywords) = match fields_from_json(reply) {
        Some(parsed) if !parsed.0.is_empty() || parsed.1.is_some() => parsed,
        _ => (fields_from_labels(reply), None, None),
    };
    let mut warnings = Vec::new();
    let layer = bounded(&fields, "target_layer", 1, 3, &mut warnings).map_err(failure)?;
    let matching_score = bounded(&fields, "matching_score", 1, 5, &mut warnings).map_err(failure)?;
    let semantic_depth = bounded(&fields, "semantic_depth", 1, 5, &mut warnings).map_err(failure)?;

    let key_entities = json_entities.unwrap_or_else(|| {
        fields
            .get("key_entities")
            .map(|v| strip_list(v).split(',').filter_map(entity_group).collect())
            .unwrap_or_default()
    });
    let keywords = json_keywords.unwrap_or_else(|| {
        fields
            .get("keywords")
            .map(|v| strip_list(v).split(',').map(clean_item).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    });
    let rewrite_question = match fields.get("rewrite_question").map(|s| s.trim()) {
        Some(s) if !s.is_empty() => s.to_string(),
        _ => {
            warnings.push("rewrite_question missing, using the original question".into());
            query.to_string()
        }
    };
    Ok((
        Strategy {
            question: query.to_string(),
            rewrite_question,
            key_entities,
            keywords,
            target_layer: Layer::from_code(layer).expect("clamped to 1..=3"),
            matching_score,
            semantic_depth,
        },
        warnings,
    ))
}

pub fn strategy_messages(query: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(prompts::STRATEGY_ARCHITECTURE),
        ChatMessage::user(format!(
            "{}\n{}\nQuery: {query}",
            prompts::STRATEGY_GOAL,
            prompts::FORMAT_STRATEGY
        )),
    ]
}

/// Asks the model for a strategy, retrying with a correction `retries` times.
/// When every reply fails to parse the defaults are used and `fallback` is
/// set. Gateway errors propagate.
pub fn parse_strategy(query: &str, gateway: &Gateway, label: &str, retries: usize) -> Result<ParsedStrategy> {
    if query.trim().is_empty() {
        return Err(Error::InvalidArgument("empty query".into()));
    }
    let mut messages = strategy_messages(query);
    let mut last_raw = String::new();
    for attempt in 0..=retries {
        let reply = gateway.chat(label, &messages)?;
        match parse_strategy_reply(query, &reply.text) {
            Ok((strategy, warnings)) => {
                return Ok(ParsedStrategy { strategy, warnings, fallback: false, raw: reply.text });
            }
            Err(e) => {
                warn!("strategy reply {attempt} unusable: {e}");
                messages.push(ChatMessage::assistant(reply.text.clone()));
                messages.push(ChatMessage::user(format!(
                    "The reply could not be used ({e}). Answer again with every field, \
                     target_layer in 1..3 and matching_score, semantic_depth in 1..5."
                )));
                last_raw = reply.text;
            }
        }
    }
    warn!("falling back to the default strategy for {query:?}");
    Ok(ParsedStrategy {
        strategy: Strategy::fallback(query),
        warnings: vec!["strategy unparseable, defaults used".into()],
        fallback: true,
        raw: last_raw,
    })
}

/// Key-entity names, their aliases and the keywords, space-joined, each
/// phrase once (compared case-insensitively, first spelling kept).
pub fn composite_query(s: &Strategy) -> String {
    let mut seen = HashSet::new();
    let mut parts = Vec::new();
    let phrases = s
        .key_entities
        .iter()
        .flat_map(|e| std::iter::once(&e.canonical).chain(&e.aliases))
        .chain(&s.keywords);
    for phrase in phrases {
        let phrase = phrase.trim();
        if !phrase.is_empty() && seen.insert(phrase.to_lowercase()) {
            parts.push(phrase);
        }
    }
    parts.join(" ")
}
