//! Corpus loading, chunking, staged knowledge extraction and index building.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::df_index::{DfIndex, EmbeddingTable};
use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, Gateway};
use crate::hypergraph::{Chunk, Hypergraph, Layer, LayerCounts, Vertex};
use crate::lexical::LexicalIndex;
use crate::prompts;
use crate::text::{count_tokens, token_spans};

/// Ledger label prefix for everything spent while indexing.
pub const BUILD_LABEL: &str = "build";

/// Separates the stage-one instructions from the chunk text.
pub const TEXT_MARKER: &str = "\n-Text-\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub text: String,
}

/// Reads a directory of `.txt` files (title = file stem, sorted by file
/// name) or a JSON-lines file of `{title, text}` records.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.display().to_string()));
    }
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        return files
            .into_iter()
            .map(|p| {
                let title = p.file_stem().expect("file has a stem").to_string_lossy().into_owned();
                Ok(Document { title, text: std::fs::read_to_string(&p)? })
            })
            .collect();
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                Error::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

/// End offsets of the sentences in `text`. A sentence runs through a
/// terminator and the whitespace after it, or up to a line break. Every unit
/// but possibly the last ends on whitespace, so token counts add up across
/// units.
fn sentence_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut seen_token = false;
    while let Some((i, c)) = chars.next() {
        let terminator = matches!(c, '.' | '!' | '?');
        if !c.is_whitespace() {
            seen_token = true;
        }
        let at_break = (terminator || c == '\n') && seen_token;
        if !at_break {
            continue;
        }
        let mut end = i + c.len_utf8();
        let mut has_space = c == '\n';
        while let Some(&(j, d)) = chars.peek() {
            if !d.is_whitespace() {
                break;
            }
            has_space = true;
            end = j + d.len_utf8();
            chars.next();
        }
        if has_space {
            ends.push(end);
            seen_token = false;
        }
    }
    if ends.last() != Some(&text.len()) {
        ends.push(text.len());
    }
    ends
}

/// Cuts `unit` into pieces of at most `limit` tokens; each cut sits right
/// before a token so trailing whitespace stays with the earlier piece.
fn split_at_tokens(unit: &str, limit: usize) -> Vec<&str> {
    let spans = token_spans(unit);
    let mut pieces = Vec::new();
    let mut start = 0;
    for chunk_start in spans.iter().skip(limit).step_by(limit).map(|&(s, _)| s) {
        pieces.push(&unit[start..chunk_start]);
        start = chunk_start;
    }
    pieces.push(&unit[start..]);
    pieces
}

/// Greedy sentence packing without overlap. A sentence longer than
/// `chunk_tokens` becomes its own chunk when it fits within
/// `chunk_tokens + overflow_slack`; past that it is cut at token boundaries.
/// Chunk texts concatenate back to the document text.
pub fn chunk_document(doc: &Document, chunk_tokens: usize, overflow_slack: usize) -> Result<Vec<Chunk>> {
    if chunk_tokens == 0 {
        return Err(Error::InvalidArgument("chunk_tokens must be positive".into()));
    }
    let title = doc.title.trim();
    if title.is_empty() {
        return Err(Error::InvalidArgument("document title is blank".into()));
    }
    if count_tokens(&doc.text) == 0 {
        return Err(Error::InvalidArgument(format!("document {title:?} is empty")));
    }

    let mut units: Vec<&str> = Vec::new();
    let mut start = 0;
    for end in sentence_ends(&doc.text) {
        let sentence = &doc.text[start..end];
        start = end;
        if count_tokens(sentence) > chunk_tokens + overflow_slack {
            units.extend(split_at_tokens(sentence, chunk_tokens));
        } else {
            units.push(sentence);
        }
    }

    let mut texts: Vec<(String, usize)> = Vec::new();
    let mut current = String::new();
    let mut current_tokens = 0;
    for unit in units {
        let n = count_tokens(unit);
        if current_tokens > 0 && current_tokens + n > chunk_tokens {
            texts.push((std::mem::take(&mut current), current_tokens));
            current_tokens = 0;
        }
        current.push_str(unit);
        current_tokens += n;
    }
    // whitespace after the last token
    if current_tokens > 0 {
        texts.push((current, current_tokens));
    } else if let Some(last) = texts.last_mut() {
        last.0.push_str(&current);
    }

    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, (text, token_count))| Chunk {
            id: format!("{title}#{i}"),
            source_title: title.to_string(),
            text,
            token_count,
            keywords: Vec::new(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub name: String,
    pub description: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    /// Entity names as listed in stage one, after repair.
    pub members: Vec<String>,
    pub description: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub entities: Vec<ExtractedEntity>,
    pub pairs: Vec<ExtractedRelation>,
    pub keywords: Vec<String>,
    pub associations: Vec<ExtractedRelation>,
    /// Member names that matched no stage-one entity and were dropped.
    pub dropped_members: Vec<String>,
    /// Relations left with too few members after repair.
    pub dropped_relations: usize,
}

fn json_object(reply: &str) -> std::result::Result<Value, String> {
    let start = reply.find(['{', '[']).ok_or("no JSON value in reply")?;
    let end = reply.rfind(['}', ']']).ok_or("no JSON value in reply")?;
    if end < start {
        return Err("no JSON value in reply".into());
    }
    serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())
}

fn text_of(v: Option<&Value>) -> String {
    match v {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    }
}

/// Accepts a list of strings or one string, optionally bracketed and comma
/// separated.
fn strings_of(v: Option<&Value>) -> Vec<String> {
    let items: Vec<String> = match v {
        Some(Value::Array(xs)) => xs.iter().map(|x| text_of(Some(x))).collect(),
        Some(Value::String(s)) => {
            let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
            inner.split(',').map(|p| p.trim().trim_matches(['"', '\'']).to_string()).collect()
        }
        _ => Vec::new(),
    };
    items.into_iter().filter(|s| !s.is_empty()).collect()
}

/// The list under `key`, or the whole reply when it is a bare array.
fn items<'a>(value: &'a Value, key: &str) -> std::result::Result<&'a [Value], String> {
    match value {
        Value::Array(xs) => Ok(xs),
        Value::Object(map) => match map.get(key) {
            Some(Value::Array(xs)) => Ok(xs),
            Some(Value::Null) | None => Ok(&[]),
            Some(_) => Err(format!("{key:?} is not a list")),
        },
        _ => Err("reply is not a JSON object".into()),
    }
}

fn parse_entities(reply: &str) -> std::result::Result<Vec<ExtractedEntity>, String> {
    let value = json_object(reply)?;
    Ok(items(&value, "entities")?
        .iter()
        .map(|e| ExtractedEntity {
            name: text_of(e.get("entity_name")),
            description: text_of(e.get("entity_description")),
            attributes: strings_of(e.get("attribute")),
        })
        .filter(|e| !e.name.is_empty())
        .collect())
}

fn parse_relations(reply: &str, key: &str, members: &str) -> std::result::Result<Vec<ExtractedRelation>, String> {
    let value = json_object(reply)?;
    Ok(items(&value, key)?
        .iter()
        .map(|r| ExtractedRelation {
            members: strings_of(r.get(members)),
            description: text_of(r.get("relationship_description")),
            attributes: strings_of(r.get("attribute")),
        })
        .collect())
}

fn parse_keywords(reply: &str) -> std::result::Result<Vec<String>, String> {
    let value = json_object(reply)?;
    match &value {
        Value::Object(map) => Ok(strings_of(map.get("high_level_keywords"))),
        Value::Array(_) => Ok(strings_of(Some(&value))),
        _ => Err("reply is not a JSON object".into()),
    }
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Maps a member name onto a stage-one entity name: case-insensitive exact
/// match first, then containment either way, preferring the longest entity
/// name. `None` when nothing matches.
pub fn repair_member<'a>(name: &str, entities: &'a [String]) -> Option<&'a str> {
    let target = fold(name);
    if target.is_empty() {
        return None;
    }
    if let Some(exact) = entities.iter().find(|e| fold(e) == target) {
        return Some(exact);
    }
    entities
        .iter()
        .filter(|e| {
            let f = fold(e);
            !f.is_empty() && (f.contains(&target) || target.contains(&f))
        })
        .max_by(|a, b| fold(a).len().cmp(&fold(b).len()).then_with(|| fold(b).cmp(&fold(a))))
        .map(String::as_str)
}

fn repair(relations: Vec<ExtractedRelation>, entities: &[String], min: usize, max: usize, result: &mut ExtractionResult) -> Vec<ExtractedRelation> {
    let mut kept = Vec::new();
    for mut rel in relations {
        let mut seen = BTreeSet::new();
        let mut members = Vec::new();
        for m in &rel.members {
            match repair_member(m, entities) {
                Some(fixed) => {
                    if seen.insert(fold(fixed)) {
                        members.push(fixed.to_string());
                    }
                }
                None => {
                    log::warn!("dropping member {m:?}: no matching entity");
                    result.dropped_members.push(m.clone());
                }
            }
        }
        if members.len() < min || members.len() > max {
            result.dropped_relations += 1;
            continue;
        }
        rel.members = members;
        kept.push(rel);
    }
    kept
}

struct Stage {
    instructions: &'static str,
    format: &'static str,
}

const STAGES: [Stage; 4] = [
    Stage { instructions: prompts::EXTRACT_ENTITIES, format: prompts::FORMAT_ENTITIES },
    Stage { instructions: prompts::EXTRACT_PAIRS, format: prompts::FORMAT_PAIRS },
    Stage { instructions: prompts::EXTRACT_KEYWORDS, format: prompts::FORMAT_KEYWORDS },
    Stage { instructions: prompts::EXTRACT_ASSOCIATIONS, format: prompts::FORMAT_ASSOCIATIONS },
];

/// The first user message of a chunk's extraction conversation.
pub fn first_stage_message(chunk_text: &str) -> String {
    format!("{}\n{}{TEXT_MARKER}{}", STAGES[0].instructions.trim_end(), STAGES[0].format.trim_end(), chunk_text)
}

fn stage_message(i: usize) -> String {
    format!("{}\n{}", STAGES[i].instructions.trim_end(), STAGES[i].format.trim_end())
}

/// Sends the stage prompt, re-asking with a correction after an unparseable
/// reply. The accepted reply stays in the conversation for later stages.
fn run_stage<T>(
    messages: &mut Vec<ChatMessage>,
    gateway: &Gateway,
    label: &str,
    chunk_id: &str,
    stage: usize,
    retries: usize,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<T> {
    for attempt in 0..=retries {
        let reply = gateway.chat(label, messages)?;
        messages.push(ChatMessage::assistant(reply.text.clone()));
        match parse(&reply.text) {
            Ok(value) => return Ok(value),
            Err(reason) if attempt == retries => {
                return Err(Error::ExtractionFailure {
                    chunk_id: chunk_id.to_string(),
                    reason: format!("stage {}: {reason}", stage + 1),
                    raw: reply.text,
                })
            }
            Err(reason) => messages.push(ChatMessage::user(format!(
                "The reply above could not be read ({reason}). {}",
                STAGES[stage].format.trim_end()
            ))),
        }
    }
    unreachable!("the last attempt returns")
}

/// Runs the four extraction stages over one chunk as a single conversation.
pub fn extract_knowledge(chunk: &Chunk, gateway: &Gateway, label: &str, retries: usize) -> Result<ExtractionResult> {
    let id = chunk.id.as_str();
    let mut messages = vec![ChatMessage::user(first_stage_message(&chunk.text))];
    let entities = run_stage(&mut messages, gateway, label, id, 0, retries, parse_entities)?;
    messages.push(ChatMessage::user(stage_message(1)));
    let pairs = run_stage(&mut messages, gateway, label, id, 1, retries, |r| {
        parse_relations(r, "pairs", "entities_pair")
    })?;
    messages.push(ChatMessage::user(stage_message(2)));
    let keywords = run_stage(&mut messages, gateway, label, id, 2, retries, parse_keywords)?;
    messages.push(ChatMessage::user(stage_message(3)));
    let associations = run_stage(&mut messages, gateway, label, id, 3, retries, |r| {
        parse_relations(r, "associations", "entities_set")
    })?;

    let names: Vec<String> = entities.iter().map(|e| e.name.clone()).collect();
    let mut result = ExtractionResult { entities, keywords, ..Default::default() };
    result.pairs = repair(pairs, &names, 2, 2, &mut result);
    result.associations = repair(associations, &names, 2, usize::MAX, &mut result);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub documents: usize,
    pub chunks: usize,
    pub failed_chunks: usize,
    pub layers: LayerCounts,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkFailure {
    pub chunk_id: String,
    pub reason: String,
    pub raw: String,
}

pub struct BuiltIndex {
    pub graph: Hypergraph,
    pub df: DfIndex,
    pub lexical: LexicalIndex,
    pub stats: BuildStats,
    pub failures: Vec<ChunkFailure>,
}

/// The text embedded for a vertex.
pub fn embedding_text(v: &Vertex) -> String {
    format!("{}: {}", v.name, v.description)
}

fn apply(graph: &mut Hypergraph, mut chunk: Chunk, result: ExtractionResult) -> Result<()> {
    let id = chunk.id.clone();
    chunk.keywords = result.keywords;
    graph.add_chunk(chunk);
    for e in result.entities {
        graph.upsert_vertex(Vertex::entity(&e.name, &e.description, e.attributes)?.with_chunk(&id))?;
    }
    for (layer, relations) in [(Layer::PairRelation, result.pairs), (Layer::MultiAssociation, result.associations)] {
        for r in relations {
            graph.upsert_vertex(Vertex::relation(layer, &r.members, &r.description, r.attributes)?.with_chunk(&id))?;
        }
    }
    Ok(())
}

/// Chunks, extracts, embeds and indexes a corpus. Chunks are extracted in
/// parallel but merged in document and chunk order, so replayed replies
/// always produce the same store.
pub fn build_index(corpus: &[Document], config: &Config, gateway: &Gateway) -> Result<BuiltIndex> {
    if corpus.is_empty() {
        return Err(Error::BuildFailure("empty corpus".into()));
    }
    let mut titles = BTreeSet::new();
    let mut chunks = Vec::new();
    for doc in corpus {
        if !titles.insert(doc.title.trim()) {
            return Err(Error::InvalidArgument(format!("duplicate document title {:?}", doc.title)));
        }
        chunks.extend(chunk_document(doc, config.chunk_tokens(), config.chunking.overflow_slack)?);
    }

    let label = format!("{BUILD_LABEL}/extract");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.extraction.parallelism)
        .build()
        .map_err(|e| Error::BuildFailure(e.to_string()))?;
    let results: Vec<Result<ExtractionResult>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|c| extract_knowledge(c, gateway, &label, config.extraction.retries))
            .collect()
    });

    let mut graph = Hypergraph::new();
    let mut failures = Vec::new();
    for (chunk, result) in chunks.into_iter().zip(results) {
        match result {
            Ok(r) => apply(&mut graph, chunk, r)?,
            Err(Error::ExtractionFailure { chunk_id, reason, raw }) => {
                log::warn!("skipping chunk {chunk_id}: {reason}");
                failures.push(ChunkFailure { chunk_id, reason, raw });
            }
            Err(e) => return Err(e),
        }
    }
    if graph.chunk_count() == 0 {
        return Err(Error::BuildFailure("no chunk was extracted successfully".into()));
    }
    if graph.vertex_count() == 0 {
        return Err(Error::BuildFailure("extraction found no knowledge units".into()));
    }
    graph.validate_complete()?;

    let vertices: Vec<&Vertex> = graph.vertices().collect();
    let mut table: Option<EmbeddingTable> = None;
    for batch in vertices.chunks(config.extraction.embed_batch) {
        let texts: Vec<String> = batch.iter().map(|v| embedding_text(v)).collect();
        let vectors = gateway.embed(&format!("{BUILD_LABEL}/embed"), &texts)?;
        for (v, vec) in batch.iter().zip(vectors) {
            let t = table.get_or_insert_with(|| EmbeddingTable::new(vec.len()));
            t.insert(v.key.clone(), vec)?;
        }
    }
    let df = DfIndex::build(table.expect("graph has vertices"), config.ann)?.with_quotas(config.quotas);
    let lexical = LexicalIndex::build(&graph, config.lexical);

    let stats = BuildStats {
        documents: corpus.len(),
        chunks: graph.chunk_count(),
        failed_chunks: failures.len(),
        layers: graph.layer_counts(),
        tokens: gateway.ledger().sum_prefixed(BUILD_LABEL).total(),
    };
    Ok(BuiltIndex { graph, df, lexical, stats, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatRequest, GatewayConfig, ScriptedBackend};
    use std::sync::Arc;

    fn doc(title: &str, text: &str) -> Document {
        Document { title: title.into(), text: text.into() }
    }

    #[test]
    fn packing_arithmetic() {
        // 160 sentences of 10 tokens each
        let text: String = (0..160).map(|i| format!("w{i} a b c d e f g h.\n")).collect();
        let chunks = chunk_document(&doc("d", &text), 780, 64).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(sizes, vec![780, 780, 40]);
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
        assert_eq!(chunks[2].id, "d#2");

        let one = chunk_document(&doc("d", "Short text here."), 780, 64).unwrap();
        assert_eq!(one.len(), 1);
        assert!(chunk_document(&doc("d", "  \n "), 780, 64).is_err());
    }

    #[test]
    fn long_sentences() {
        let long: String = (0..30).map(|i| format!("t{i} ")).collect();
        let text = format!("Lead in. {long}. Tail.");
        // within slack: kept whole
        let chunks = chunk_document(&doc("d", &text), 20, 15).unwrap();
        assert!(chunks.iter().any(|c| c.token_count == 31));
        // past slack: cut into 20-token pieces
        let chunks = chunk_document(&doc("d", &text), 20, 5).unwrap();
        assert!(chunks.iter().all(|c| c.token_count <= 20));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
    }

    #[test]
    fn sentence_units_end_on_whitespace() {
        let text = "  A. B!\nC? D e.f. ";
        let ends = sentence_ends(text);
        let mut start = 0;
        let mut total = 0;
        for end in ends {
            total += count_tokens(&text[start..end]);
            start = end;
        }
        assert_eq!(total, count_tokens(text));
    }

    #[test]
    fn member_repair() {
        let names: Vec<String> = ["Francis Bacon", "Sir Nicholas Bacon", "Head I"].iter().map(|s| s.to_string()).collect();
        assert_eq!(repair_member("francis bacon", &names), Some("Francis Bacon"));
        assert_eq!(repair_member("Nicholas Bacon", &names), Some("Sir Nicholas Bacon"));
        assert_eq!(repair_member("the painting Head I", &names), Some("Head I"));
        assert_eq!(repair_member("Eric Hall", &names), None);
        assert_eq!(repair_member(" ", &names), None);
    }

    #[test]
    fn lenient_stage_parsing() {
        let e = parse_entities("```json\n{\"entities\":[{\"entity_name\":\"A\",\"entity_description\":\"a\",\"attribute\":\"x\"},{\"entity_name\":\"\"}]}\n```").unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].attributes, vec!["x"]);
        let p = parse_relations(r#"{"pairs":[{"entities_pair":"[A, B]","relationship_description":"r"}]}"#, "pairs", "entities_pair").unwrap();
        assert_eq!(p[0].members, vec!["A", "B"]);
        assert!(parse_entities("{}").unwrap().is_empty());
        assert!(parse_entities("not json").is_err());
        assert!(parse_keywords(r#"{"high_level_keywords": "x"}"#).unwrap() == vec!["x"]);
    }

    fn scripted(f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> Gateway {
        Gateway::with_backend(GatewayConfig::default(), Arc::new(ScriptedBackend::new(16).rule(f)))
    }

    fn stage_of(req: &ChatRequest) -> usize {
        let last = req.last_user_message();
        STAGES.iter().position(|s| last.starts_with(s.instructions.trim_end())).unwrap_or(99)
    }

    fn good_replies(req: &ChatRequest) -> Option<String> {
        Some(match stage_of(req) {
            0 => r#"{"entities":[{"entity_name":"Ann","entity_description":"Ann is a painter."},{"entity_name":"Bob","entity_description":"Bob sits."},{"entity_name":"Cy","entity_description":"Cy."}]}"#.into(),
            1 => r#"{"pairs":[{"entities_pair":["ann","Bob"],"relationship_description":"Ann paints Bob."},{"entities_pair":["Ann","Zed"],"relationship_description":"x"}]}"#.into(),
            2 => r#"{"high_level_keywords":["portraiture"]}"#.into(),
            3 => r#"{"associations":[{"entities_set":["Ann","Bob","Cy","Zed"],"relationship_description":"A studio."}]}"#.into(),
            _ => "{}".into(),
        })
    }

    fn chunk(text: &str) -> Chunk {
        Chunk { id: "d#0".into(), source_title: "d".into(), text: text.into(), token_count: count_tokens(text), keywords: vec![] }
    }

    #[test]
    fn four_stage_conversation() {
        let gw = scripted(good_replies);
        let r = extract_knowledge(&chunk("Ann paints Bob."), &gw, "t", 2).unwrap();
        assert_eq!(r.entities.len(), 3);
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].members, vec!["Ann", "Bob"]);
        assert_eq!(r.associations[0].members, vec!["Ann", "Bob", "Cy"]);
        assert_eq!(r.keywords, vec!["portraiture"]);
        assert_eq!(r.dropped_members, vec!["Zed", "Zed"]);
        assert_eq!(r.dropped_relations, 1);
        assert_eq!(gw.ledger().calls(), 4);
    }

    #[test]
    fn retries_then_fails() {
        let gw = scripted(|req| {
            if stage_of(req) == 99 || stage_of(req) == 0 && req.messages.len() > 1 {
                // corrective turn after a bad first reply
                return Some(r#"{"entities":[]}"#.into());
            }
            Some(if stage_of(req) == 0 { "garbage".into() } else { "{}".into() })
        });
        let r = extract_knowledge(&chunk("x"), &gw, "t", 2).unwrap();
        assert!(r.entities.is_empty());

        let gw = scripted(|_| Some("garbage".into()));
        match extract_knowledge(&chunk("x"), &gw, "t", 2) {
            Err(Error::ExtractionFailure { raw, .. }) => assert_eq!(raw, "garbage"),
            other => panic!("{other:?}"),
        }
        assert_eq!(gw.ledger().calls(), 3);
    }

    #[test]
    fn build_from_scripted_replies() {
        let gw = scripted(good_replies);
        let corpus = vec![doc("one", "Ann paints Bob."), doc("two", "Bob meets Cy.")];
        let built = build_index(&corpus, &Config::default(), &gw).unwrap();
        assert_eq!((built.stats.layers.entities, built.stats.layers.pair_relations, built.stats.layers.multi_associations), (3, 1, 1));
        assert_eq!(built.stats.chunks, 2);
        assert!(built.stats.tokens > 0);
        assert_eq!(built.df.global_len(), 5);
        assert_eq!(built.graph.vertex("1|ann").unwrap().chunk_ids.len(), 2);
        assert_eq!(built.graph.chunk("one#0").unwrap().keywords, vec!["portraiture"]);

        assert!(matches!(build_index(&[], &Config::default(), &gw), Err(Error::BuildFailure(_))));
        let empty = build_index(&corpus, &Config::default(), &Gateway::stub());
        assert!(matches!(empty, Err(Error::BuildFailure(_))));
        let dup = vec![doc("one", "a."), doc("one", "b.")];
        assert!(build_index(&dup, &Config::default(), &gw).is_err());
    }

    #[test]
    fn failed_chunks_are_skipped_but_gateway_errors_propagate() {
        let gw = scripted(|req| {
            let first = &req.messages[0].content;
            if first.ends_with("bad.") {
                Some("garbage".into())
            } else {
                good_replies(req)
            }
        });
        let corpus = vec![doc("one", "Ann paints Bob."), doc("two", "bad.")];
        let built = build_index(&corpus, &Config::default(), &gw).unwrap();
        assert_eq!(built.failures.len(), 1);
        assert_eq!(built.failures[0].chunk_id, "two#0");
        assert_eq!(built.stats.chunks, 1);

        let gw = scripted(|req| if req.messages[0].content.ends_with("bad.") { None } else { good_replies(req) });
        assert!(build_index(&corpus, &Config::default(), &gw).err().unwrap().is_gateway());
    }

    #[test]
    fn corpus_loading() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "Second.").unwrap();
        std::fs::write(dir.path().join("a.txt"), "First.").unwrap();
        std::fs::write(dir.path().join("skip.md"), "no").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.iter().map(|d| d.title.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        let jsonl = dir.path().join("c.jsonl");
        std::fs::write(&jsonl, "{\"title\":\"x\",\"text\":\"y\"}\n\n").unwrap();
        assert_eq!(load_corpus(&jsonl).unwrap(), vec![doc("x", "y")]);
        assert!(matches!(load_corpus(dir.path().join("nope")), Err(Error::NotFound(_))));
    }
}
