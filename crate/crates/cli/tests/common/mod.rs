//! Fixture authoring. A scripted stand-in model answers every request the
//! fixtures need; recording it produces the replay cassettes checked in
//! under tests/fixtures. Set IGMIRAG_REGENERATE_FIXTURES=1 and run the
//! `fixtures` test to rewrite them.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use igmirag_core::eval::normalize_answer;
use igmirag_core::extraction::TEXT_MARKER;
use igmirag_core::gateway::{ChatRequest, RecordingBackend, ScriptedBackend};
use igmirag_core::pipeline::{load_qa, query_label, run_eval};
use igmirag_core::prompts;
use igmirag_core::{build_index, load_corpus, Config, Engine, Gateway, QueryOptions};
use serde_json::{json, Value};

pub const BACON_QUESTION: &str = "Who was the father of The Portrait of George Dyer Talking's creator?";
pub const TWO_HOP_QUESTION: &str = "Whom did the person who ran the workshop train?";

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn entity(name: &str, description: &str) -> Value {
    json!({ "entity_name": name, "entity_description": description, "attribute": [] })
}

fn pair(a: &str, b: &str, description: &str) -> Value {
    json!({ "entities_pair": [a, b], "relationship_description": description, "attribute": [] })
}

fn association(members: &[&str], description: &str) -> Value {
    json!({ "entities_set": members, "relationship_description": description, "attribute": [] })
}

struct Extraction {
    /// Start of the chunk text this reply set belongs to.
    opening: &'static str,
    entities: Vec<Value>,
    pairs: Vec<Value>,
    keywords: Vec<&'static str>,
    associations: Vec<Value>,
}

fn extractions() -> Vec<Extraction> {
    vec![
        Extraction {
            opening: "Portrait of George Dyer Talking is",
            entities: vec![
                entity("Portrait of George Dyer Talking", "Portrait of George Dyer Talking is a 1966 oil painting by Francis Bacon showing George Dyer on a swivel stool under a bare light bulb."),
                entity("Francis Bacon", "Francis Bacon is the Irish-born artist who painted Portrait of George Dyer Talking in 1966."),
                entity("George Dyer", "George Dyer was the lover and most frequent model of Francis Bacon, shown seated in Portrait of George Dyer Talking."),
            ],
            pairs: vec![
                pair("George Dyer", "Francis Bacon", "George Dyer was the lover of Francis Bacon and sat for his portraits."),
                pair("Francis Bacon", "Portrait of George Dyer Talking", "Francis Bacon painted Portrait of George Dyer Talking in 1966."),
            ],
            keywords: vec!["figurative portraiture", "artist and model"],
            associations: vec![],
        },
        Extraction {
            opening: "Francis Bacon was born",
            entities: vec![
                entity("Francis Bacon", "Francis Bacon was born on 22 January 1561 at York House in London, the son of Sir Nicholas Bacon and Anne (Cooke) Bacon."),
                entity("Sir Nicholas Bacon", "Sir Nicholas Bacon was Lord Keeper of the Great Seal and the father of Francis Bacon."),
                entity("Anne (Cooke) Bacon", "Anne (Cooke) Bacon was the second wife of Sir Nicholas Bacon, the mother of Francis Bacon and a daughter of Anthony Cooke."),
                entity("William Cecil, 1st Baron Burghley", "William Cecil, 1st Baron Burghley married the sister of Anne (Cooke) Bacon and was the uncle of Francis Bacon."),
            ],
            pairs: vec![
                pair("Francis Bacon", "Sir Nicholas Bacon", "Francis Bacon was the son of Sir Nicholas Bacon, Lord Keeper of the Great Seal."),
                pair("Francis Bacon", "Anne (Cooke) Bacon", "Anne (Cooke) Bacon was the mother of Francis Bacon."),
                pair("Sir Nicholas Bacon", "Francis Bacon", "Sir Nicholas Bacon was the father of Francis Bacon."),
                pair("Francis Bacon", "William Cecil, 1st Baron Burghley", "William Cecil, 1st Baron Burghley was the uncle of Francis Bacon by marriage."),
            ],
            keywords: vec!["Tudor family lineage", "court office"],
            associations: vec![association(
                &["Francis Bacon", "Sir Nicholas Bacon", "Anne (Cooke) Bacon"],
                "Francis Bacon was born in 1561 to Sir Nicholas Bacon, Lord Keeper of the Great Seal, and his second wife Anne (Cooke) Bacon. The three form one household. Through Anne the family was tied to the Cooke and Cecil families.",
            )],
        },
        Extraction {
            opening: "Head I is",
            entities: vec![
                entity("Head I", "Head I is a small 1948 oil and tempera painting on hardboard by Francis Bacon, the first of a series of six heads."),
                entity("Francis Bacon", "Francis Bacon painted Head I in 1948 and showed the series at the Hanover Gallery in 1949."),
            ],
            pairs: vec![pair("Francis Bacon", "Head I", "Francis Bacon painted Head I in 1948 as the first of six heads.")],
            keywords: vec!["postwar expressionist painting"],
            associations: vec![],
        },
        Extraction {
            opening: "Figure in a Landscape is",
            entities: vec![
                entity("Figure in a landscape", "Figure in a Landscape is a 1945 painting by Francis Bacon based on a photograph of Eric Hall."),
                entity("Francis Bacon", "Francis Bacon painted Figure in a Landscape in 1945."),
                entity("Diana Watson", "Diana Watson was a cousin of Francis Bacon who recalled the painting in his studio."),
            ],
            pairs: vec![
                pair("Francis Bacon", "Figure in a landscape", "Francis Bacon painted Figure in a Landscape in 1945."),
                pair("Eric Hall", "Figure in a landscape", "Eric Hall was the model for the figure."),
            ],
            keywords: vec!["wartime painting"],
            associations: vec![association(
                &["Figure in a landscape", "Francis Bacon", "Eric Hall", "Diana Watson"],
                "Francis Bacon painted Figure in a Landscape in 1945 from a photograph of Eric Hall. Diana Watson, his cousin, saw it in the studio. The picture is now in the Tate collection.",
            )],
        },
        Extraction {
            opening: "Portrait of Dürer's Father at 70 is",
            entities: vec![
                entity("Albrecht Dürer", "Albrecht Dürer was the German artist who painted Portrait of Dürer's Father at 70 in 1497."),
                entity("Albrecht Dürer the Elder", "Albrecht Dürer the Elder was a goldsmith and the father of Albrecht Dürer, painted in his seventieth year."),
            ],
            pairs: vec![pair("Albrecht Dürer", "Albrecht Dürer the Elder", "Albrecht Dürer painted his father Albrecht Dürer the Elder in 1497.")],
            keywords: vec!["Renaissance portraiture"],
            associations: vec![],
        },
        Extraction {
            opening: "Alpha ran the workshop",
            entities: vec![
                entity("Alpha", "Alpha ran the workshop by the river."),
                entity("Beta", "Beta learned glazing."),
            ],
            pairs: vec![pair("Alpha", "Beta", "Alpha trained Beta in glazing.")],
            keywords: vec!["craft apprenticeship"],
            associations: vec![],
        },
    ]
}

struct Scripted {
    question: &'static str,
    rewrite: &'static str,
    key_entities: &'static str,
    keywords: &'static str,
    layer: u8,
    matching: u8,
    depth: u8,
    /// Context text that supports the answer.
    evidence: &'static str,
    answer: &'static str,
}

fn questions() -> Vec<Scripted> {
    vec![
        Scripted {
            question: BACON_QUESTION,
            rewrite: "Who was the father of Francis Bacon, the painter of Portrait of George Dyer Talking?",
            key_entities: "[Francis Bacon | Bacon, Portrait of George Dyer Talking | painting]",
            keywords: "[father, creator, painter, family]",
            layer: 1,
            matching: 4,
            depth: 2,
            evidence: "son of Sir Nicholas Bacon",
            answer: "Sir Nicholas Bacon",
        },
        Scripted {
            question: "Who painted Head I?",
            rewrite: "Which artist painted the 1948 work Head I?",
            key_entities: "[Head I | painting]",
            keywords: "[painter, artist]",
            layer: 2,
            matching: 4,
            depth: 1,
            evidence: "hardboard by Francis Bacon",
            answer: "Francis Bacon",
        },
        Scripted {
            question: "In which year was Portrait of George Dyer Talking painted?",
            rewrite: "In which year did Francis Bacon paint Portrait of George Dyer Talking?",
            key_entities: "[Portrait of George Dyer Talking | painting]",
            keywords: "[year, painted, date]",
            layer: 1,
            matching: 5,
            depth: 1,
            evidence: "1966 oil painting",
            answer: "1966",
        },
        Scripted {
            question: "Who was the mother of Francis Bacon?",
            rewrite: "Who was the mother of Francis Bacon, born 1561 at York House?",
            key_entities: "[Francis Bacon | Bacon]",
            keywords: "[mother, family, parents]",
            layer: 2,
            matching: 3,
            depth: 2,
            evidence: "second wife Anne (Cooke) Bacon",
            answer: "Anne (Cooke) Bacon",
        },
        Scripted {
            question: "Which artist painted Portrait of Dürer's Father at 70?",
            rewrite: "Which German artist painted Portrait of Dürer's Father at 70 in 1497?",
            key_entities: "[Portrait of Dürer's Father at 70 | painting]",
            keywords: "[artist, painter]",
            layer: 1,
            matching: 4,
            depth: 1,
            evidence: "German artist Albrecht Dürer",
            answer: "Albrecht Dürer",
        },
        Scripted {
            question: TWO_HOP_QUESTION,
            rewrite: "Whom did the person who ran the workshop by the river train?",
            key_entities: "[workshop | studio]",
            keywords: "[ran, workshop, river]",
            layer: 1,
            matching: 4,
            depth: 2,
            evidence: "- Beta:",
            answer: "Beta",
        },
    ]
}

fn extraction_reply(req: &ChatRequest) -> Option<String> {
    let first = &req.messages.first()?.content;
    let (_, text) = first.split_once(TEXT_MARKER)?;
    let table = extractions();
    let ex = table.iter().find(|e| text.starts_with(e.opening))?;
    let last = req.last_user_message();
    let stage = [
        prompts::EXTRACT_ENTITIES,
        prompts::EXTRACT_PAIRS,
        prompts::EXTRACT_KEYWORDS,
        prompts::EXTRACT_ASSOCIATIONS,
    ]
    .iter()
    .position(|p| last.starts_with(p.trim_end()))?;
    let value = match stage {
        0 => json!({ "entities": ex.entities }),
        1 => json!({ "pairs": ex.pairs }),
        2 => json!({ "high_level_keywords": ex.keywords }),
        _ => json!({ "associations": ex.associations }),
    };
    Some(format!("```json\n{}\n```", serde_json::to_string_pretty(&value).ok()?))
}

fn strategy_reply(req: &ChatRequest) -> Option<String> {
    let last = req.last_user_message();
    if !last.starts_with(prompts::STRATEGY_GOAL) {
        return None;
    }
    let query = last.rsplit_once("Query: ")?.1.trim();
    let table = questions();
    let q = table.iter().find(|q| q.question == query)?;
    Some(format!(
        "question: {}\nrewrite_question: {}\nkey_entities: {}\nkeywords: {}\ntarget_layer: {}\nmatching_score: {}\nsemantic_depth: {}",
        q.question, q.rewrite, q.key_entities, q.keywords, q.layer, q.matching, q.depth
    ))
}

fn answer_reply(req: &ChatRequest) -> Option<String> {
    let last = req.last_user_message();
    let (head, tail) = last.split_once("---Query---")?;
    let question = tail.split_once("Question: ")?.1.lines().next()?.trim();
    let table = questions();
    let q = table.iter().find(|q| q.question == question)?;
    Some(if head.contains(q.evidence) {
        format!("Thought: The data tables state it directly.\nAnswer: {}.", q.answer)
    } else {
        "Thought: The data tables do not cover this.\nAnswer: Unknown.".to_string()
    })
}

fn section<'a>(text: &'a str, heading: &str, next: &str) -> Option<&'a str> {
    let start = text.find(heading)? + heading.len();
    let end = text[start..].find(next)? + start;
    Some(text[start..end].trim())
}

fn judge_reply(req: &ChatRequest) -> Option<String> {
    let last = req.last_user_message();
    let gold = section(last, "# Reference Answer\n", "\n# Answer that Requires Judgment")?;
    let pred = section(last, "# Answer that Requires Judgment\n", "\nEvaluate the answer")?;
    let same = gold.split("; ").any(|g| normalize_answer(g) == normalize_answer(pred));
    let (level, score) = if same { (5, "95.00") } else { (1, "10.00") };
    let block = |name: &str| {
        format!("    \"{name}\": {{\n        \"Explanation\": \"Compared with the reference.\"\n        \"Level\": \"{level}\"\n        \"Score\": \"{score}\"\n    }},\n")
    };
    Some(format!(
        "{{\n    \"Commonalities\": \"{}\"\n{}{}{}}}",
        if same { "Same entity." } else { "Nothing in common." },
        block("Exact Match"),
        block("Recall"),
        block("Precision")
    ))
}

pub fn scripted_backend(dim: usize) -> ScriptedBackend {
    ScriptedBackend::new(dim)
        .rule(extraction_reply)
        .rule(strategy_reply)
        .rule(answer_reply)
        .rule(judge_reply)
}

/// Everything the tests replay against one fixture directory.
fn record(dir: &Path, cassette: &Path, questions: &[&str], qa: Option<&Path>) {
    let mut config = Config::load(dir.join("igmirag.toml")).expect("fixture config");
    let backend = RecordingBackend::new(
        Box::new(scripted_backend(config.gateway.stub_embedding_dim)),
        cassette,
    )
    .expect("recorder");
    config.gateway.cassette = Some(cassette.to_path_buf());
    let gateway = Gateway::with_backend(config.gateway.clone(), Arc::new(backend));
    let corpus = load_corpus(dir.join("corpus")).expect("fixture corpus");
    let built = build_index(&corpus, &config, &gateway).expect("fixture build");
    let engine = Engine::from_built(config, built);
    for (i, q) in questions.iter().enumerate() {
        for no_diffusion in [false, true] {
            let opts = QueryOptions { no_diffusion, mode: None };
            engine.query(q, &gateway, &query_label(i), opts).expect("fixture query");
        }
    }
    if let Some(qa) = qa {
        let records = load_qa(qa).expect("fixture qa");
        run_eval(&engine, &gateway, &records, false).expect("fixture eval");
        run_eval(&engine, &gateway, &records, true).expect("fixture judged eval");
    }
    gateway.flush().expect("cassette write");
}

/// Records both fixtures' cassettes under `out` (or in place) and returns
/// their paths.
pub fn regenerate(out: Option<&Path>) -> Vec<PathBuf> {
    let mut written = Vec::new();
    for name in ["bacon", "two_hop"] {
        let dir = fixture_dir(name);
        let cassette = match out {
            Some(o) => o.join(format!("{name}.jsonl")),
            None => dir.join("cassette.jsonl"),
        };
        let _ = std::fs::remove_file(&cassette);
        match name {
            "bacon" => record(&dir, &cassette, &[BACON_QUESTION], Some(&dir.join("qa.jsonl"))),
            _ => record(&dir, &cassette, &[TWO_HOP_QUESTION], None),
        }
        written.push(cassette);
    }
    written
}

pub mod graphs;
pub mod pabd_oracle;
