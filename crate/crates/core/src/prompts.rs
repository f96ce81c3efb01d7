//! Prompt templates, shipped as data files next to the crate sources.
//!
//! Placeholders use `{name}`; a doubled brace renders as a single literal one.

use std::collections::HashMap;

pub const EXTRACT_ENTITIES: &str = include_str!("../prompts/extract_entities.txt");
pub const EXTRACT_PAIRS: &str = include_str!("../prompts/extract_pairs.txt");
pub const EXTRACT_KEYWORDS: &str = include_str!("../prompts/extract_keywords.txt");
pub const EXTRACT_ASSOCIATIONS: &str = include_str!("../prompts/extract_associations.txt");

pub const FORMAT_ENTITIES: &str = include_str!("../prompts/format_entities.txt");
pub const FORMAT_PAIRS: &str = include_str!("../prompts/format_pairs.txt");
pub const FORMAT_KEYWORDS: &str = include_str!("../prompts/format_keywords.txt");
pub const FORMAT_ASSOCIATIONS: &str = include_str!("../prompts/format_associations.txt");

pub const STRATEGY_ARCHITECTURE: &str = include_str!("../prompts/strategy_architecture.txt");
pub const STRATEGY_GOAL: &str = include_str!("../prompts/strategy_goal.txt");
pub const FORMAT_STRATEGY: &str = include_str!("../prompts/format_strategy.txt");

pub const ANSWER_BRIEF: &str = include_str!("../prompts/answer_brief.txt");
pub const ANSWER_DETAILED: &str = include_str!("../prompts/answer_detailed.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");

/// Question-generation templates. Nothing in the engine calls these.
pub const QUESTION_ONE_HOP: &str = include_str!("../prompts/question_one_hop.txt");
pub const QUESTION_MULTI_HOP: &str = include_str!("../prompts/question_multi_hop.txt");

/// Fills `{name}` placeholders. Unknown names are left as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let vars: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('{') {
            if let Some(end) = tail.find('}') {
                let name = &tail[1..end];
                if let Some(value) = vars.get(name) {
                    out.push_str(value);
                    rest = &tail[end + 1..];
                    continue;
                }
            }
        }
        out.push_str(&tail[..1]);
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}
