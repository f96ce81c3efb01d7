//! Answer scoring: token-overlap EM/F1 for short answers and a model judge
//! for long-form ones.

use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, Gateway};
use crate::prompts;

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("articles"));

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / p.len() as f64;
    let recall = same as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortFormScore {
    /// 1.0 on an exact normalized match with any gold answer, else 0.0.
    pub em: f64,
    /// Best token F1 over the gold answers.
    pub f1: f64,
}

pub fn short_form_score(pred: &str, golds: &[String]) -> Result<ShortFormScore> {
    if golds.is_empty() {
        return Err(Error::InvalidArgument("no gold answers".into()));
    }
    let p = normalize_answer(pred);
    let mut best = ShortFormScore { em: 0.0, f1: 0.0 };
    for gold in golds {
        let g = normalize_answer(gold);
        if p == g {
            best.em = 1.0;
        }
        best.f1 = best.f1.max(token_f1(&p, &g));
    }
    Ok(best)
}

/// Rubric scores on a 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub em: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

pub fn harmonic_f1(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

fn rubric_score(reply: &str, name: &str) -> Option<f64> {
    let block = Regex::new(&format!(r#"(?s)"{name}"\s*:\s*\{{(.*?)\}}"#)).expect("block pattern");
    let inner = block.captures(reply)?.get(1)?.as_str();
    let score = Regex::new(r#""Score"\s*:\s*"?\s*(\d+(?:\.\d+)?)"#).expect("score pattern");
    let value: f64 = score.captures(inner)?[1].parse().ok()?;
    (0.0..=100.0).contains(&value).then_some(value)
}

/// Reads the three rubric scores from a judge reply. The reply only has to
/// look like the requested JSON: missing commas and quoted numbers are fine.
pub fn parse_judge_reply(reply: &str) -> Result<JudgeScore> {
    let get = |name: &str| {
        rubric_score(reply, name).ok_or_else(|| Error::ParseFailure {
            reason: format!("no usable {name} score"),
            raw: reply.to_string(),
        })
    };
    let em = get("Exact Match")?;
    let recall = get("Recall")?;
    let precision = get("Precision")?;
    Ok(JudgeScore { em, recall, precision, f1: harmonic_f1(recall, precision) })
}

pub fn judge_messages(question: &str, gold: &str, pred: &str) -> Vec<ChatMessage> {
    vec![ChatMessage::user(prompts::render(
        prompts::JUDGE,
        &[("query", question), ("gold_answer", gold), ("pre_answer", pred)],
    ))]
}

pub fn judge_score(
    question: &str,
    gold: &str,
    pred: &str,
    gateway: &Gateway,
    label: &str,
    retries: usize,
) -> Result<JudgeScore> {
    let mut messages = judge_messages(question, gold, pred);
    let mut last = None;
    for _ in 0..=retries {
        let reply = gateway.chat(label, &messages)?;
        match parse_judge_reply(&reply.text) {
            Ok(score) => return Ok(score),
            Err(e) => {
                messages.push(ChatMessage::assistant(reply.text));
                messages.push(ChatMessage::user(
                    "Output the evaluation again in the JSON format given above, with a single number for every Score.",
                ));
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question: String,
    pub answers: Vec<String>,
    pub predicted: String,
    /// 0/1 for short-form scoring, 0–100 when judged.
    pub em: f64,
    /// 0–1 for short-form scoring, 0–100 when judged.
    pub f1: f64,
    pub tokens: u64,
    pub depth_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeScore>,
    /// Set when the query or its judging failed; such records are left out
    /// of the means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: usize,
    pub scored: usize,
    pub failures: usize,
    pub judged: bool,
    /// Mean EM in percent.
    pub em: f64,
    /// Mean F1 in percent.
    pub f1: f64,
    /// Query-side tokens over all records divided by the number of records.
    pub avg_tokens: f64,
    pub query_tokens: u64,
    pub judge_tokens: u64,
    /// Percentage of records per semantic depth, depths 1 to 5.
    pub depth_histogram: BTreeMap<usize, f64>,
}

pub fn report(records: &[EvalRecord], judged: bool, judge_tokens: u64) -> EvalReport {
    let scored: Vec<&EvalRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let scale = if judged { 1.0 } else { 100.0 };
    let mean = |f: fn(&EvalRecord) -> f64| {
        if scored.is_empty() {
            0.0
        } else {
            scored.iter().map(|r| f(r)).sum::<f64>() / scored.len() as f64 * scale
        }
    };
    let query_tokens: u64 = records.iter().map(|r| r.tokens).sum();
    let mut depth_histogram: BTreeMap<usize, f64> = (1..=5).map(|d| (d, 0.0)).collect();
    if !records.is_empty() {
        for r in records {
            *depth_histogram.entry(r.depth_used).or_default() += 1.0;
        }
        for v in depth_histogram.values_mut() {
            *v = *v * 100.0 / records.len() as f64;
        }
    }
    EvalReport {
        queries: records.len(),
        scored: scored.len(),
        failures: records.len() - scored.len(),
        judged,
        em: mean(|r| r.em),
        f1: mean(|r| r.f1),
        avg_tokens: if records.is_empty() { 0.0 } else { query_tokens as f64 / records.len() as f64 },
        query_tokens,
        judge_tokens,
        depth_histogram,
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12}{:>10}\n", "Queries", self.queries));
        out.push_str(&format!("{:<12}{:>10}\n", "Failures", self.failures));
        out.push_str(&format!("{:<12}{:>10.2}\n", "EM", self.em));
        out.push_str(&format!("{:<12}{:>10.2}\n", "F1", self.f1));
        out.push_str(&format!("{:<12}{:>10.1}\n", "Avg.Tokens", self.avg_tokens));
        out.push_str("Depth distribution\n");
        for (d, share) in &self.depth_histogram {
            let bar = "#".repeat((share / 5.0).round() as usize);
            out.push_str(&format!("  d={d} {share:>6.1}% {bar}\n"));
        }
        out
    }
}
