//! Depth-sized context windows and answer generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, Gateway, TokenUsage};
use crate::hypergraph::{Chunk, Hypergraph, Layer, Vertex};
use crate::prompts;
use crate::retrieval::chunk_relevance;
use crate::scores::{ChunkScores, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    /// Knowledge units per unit of depth (`k_u`).
    pub unit_multiplier: usize,
    /// Chunks per unit of depth (`k_c`).
    pub chunk_multiplier: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams { unit_multiplier: 5, chunk_multiplier: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowBudget {
    pub top_ku: usize,
    pub top_kc: usize,
}

pub fn window_quotas(depth: usize, params: WindowParams) -> Result<WindowBudget> {
    if !(1..=5).contains(&depth) {
        return Err(Error::InvalidArgument(format!("depth {depth} outside 1..=5")));
    }
    Ok(WindowBudget {
        top_ku: params.unit_multiplier * depth,
        top_kc: params.chunk_multiplier * depth,
    })
}

/// Anchors by initial score, then at most `top_ku` non-anchor keys by
/// extended score. Anchors themselves are not capped.
pub fn select_units(anchors: &ScoreMap, extended: &ScoreMap, top_ku: usize) -> Vec<(String, f64)> {
    let mut units = anchors.ranked();
    units.extend(
        extended
            .ranked()
            .into_iter()
            .filter(|(k, _)| !anchors.contains(k))
            .take(top_ku),
    );
    units
}

/// The best `top_kc` chunks.
pub fn select_chunks(scores: &ChunkScores, top_kc: usize) -> Vec<(String, f64)> {
    let mut ranked = scores.ranked();
    ranked.truncate(top_kc);
    ranked
}

/// `w · initial(c) + (1 − w) · extended(c)`, where `extended` spreads the
/// diffused vertex scores onto chunks the same way the anchors were.
pub fn fuse_chunk_scores(
    initial: &ChunkScores,
    extended_vertex_scores: &ScoreMap,
    graph: &Hypergraph,
    w: f64,
) -> Result<ChunkScores> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("fusion weight {w} outside [0, 1]")));
    }
    let extended = chunk_relevance(extended_vertex_scores, graph)?;
    let mut ids: Vec<&String> = initial.keys().chain(extended.keys()).collect();
    ids.sort();
    ids.dedup();
    Ok(ScoreMap::from_pairs(
        ids.into_iter()
            .map(|id| (id.clone(), w * initial.get(id) + (1.0 - w) * extended.get(id))),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub units: Vec<Vertex>,
    pub chunks: Vec<Chunk>,
    pub rendered: String,
    pub budget: WindowBudget,
}

const SECTIONS: [(Layer, &str); 3] = [
    (Layer::Entity, "-*Entities*-"),
    (Layer::PairRelation, "-*Pairwise Relations*-"),
    (Layer::MultiAssociation, "-*Multiple Associations*-"),
];

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders units by layer and then the passages, each list in the order
/// given.
pub fn assemble(units: Vec<Vertex>, chunks: Vec<Chunk>, budget: WindowBudget) -> ContextWindow {
    let mut out = String::new();
    for (layer, heading) in SECTIONS {
        out.push_str(heading);
        out.push('\n');
        for u in units.iter().filter(|u| u.layer == layer) {
            out.push_str(&format!("- {}: {}\n", u.name, one_line(&u.description)));
        }
    }
    out.push_str("-*Passages*-\n");
    for c in &chunks {
        out.push_str(&format!("- Title: {}\n  {}\n", c.source_title, one_line(&c.text)));
    }
    ContextWindow { units, chunks, rendered: out, budget }
}

/// Looks up the selected keys and ids and renders them.
pub fn assemble_from_graph(
    graph: &Hypergraph,
    units: &[(String, f64)],
    chunks: &[(String, f64)],
    budget: WindowBudget,
) -> Result<ContextWindow> {
    let units = units
        .iter()
        .map(|(k, _)| graph.vertex(k).cloned().ok_or_else(|| Error::NotFound(k.clone())))
        .collect::<Result<Vec<_>>>()?;
    let chunks = chunks
        .iter()
        .map(|(id, _)| graph.chunk(id).cloned().ok_or_else(|| Error::NotFound(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(units, chunks, budget))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// Reasoning followed by a short final answer.
    #[default]
    Brief,
    /// A long-form answer of several hundred words.
    Detailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutput {
    pub thought: String,
    pub answer: String,
    pub usage: TokenUsage,
    pub raw: String,
    /// Brief mode only: the reply had no `Answer:` marker.
    pub marker_missing: bool,
}

/// Splits a brief-mode reply at its last `Answer:` marker. Without one the
/// whole reply is the answer and the flag is false.
pub fn parse_answer(reply: &str) -> (String, String, bool) {
    let Some(pos) = reply.rfind("Answer:") else {
        return (String::new(), reply.trim().to_string(), false);
    };
    let before = &reply[..pos];
    let thought = match before.find("Thought:") {
        Some(t) => &before[t + "Thought:".len()..],
        None => before,
    };
    let answer = reply[pos + "Answer:".len()..].trim();
    (thought.trim().to_string(), answer.to_string(), true)
}

pub fn answer_messages(query: &str, window: &ContextWindow, mode: AnswerMode) -> Vec<ChatMessage> {
    let template = match mode {
        AnswerMode::Brief => prompts::ANSWER_BRIEF,
        AnswerMode::Detailed => prompts::ANSWER_DETAILED,
    };
    vec![ChatMessage::user(prompts::render(
        template,
        &[("info", window.rendered.trim_end()), ("query", query)],
    ))]
}

pub fn answer(
    query: &str,
    window: &ContextWindow,
    gateway: &Gateway,
    label: &str,
    mode: AnswerMode,
) -> Result<AnswerOutput> {
    let reply = gateway.chat(label, &answer_messages(query, window, mode))?;
    let (thought, answer, marker_missing) = match mode {
        AnswerMode::Brief => {
            let (thought, answer, found) = parse_answer(&reply.text);
            if !found {
                log::warn!("reply has no Answer: marker, using it whole");
            }
            (thought, answer, !found)
        }
        AnswerMode::Detailed => (String::new(), reply.text.trim().to_string(), false),
    };
    Ok(AnswerOutput { thought, answer, usage: reply.usage, raw: reply.text, marker_missing })
}
