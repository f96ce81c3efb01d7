//! BM25 over vertex names: the keyword channel of anchor recall.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::hypergraph::Hypergraph;
use crate::text::terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    postings: HashMap<String, Vec<(String, u32)>>,
    doc_lengths: BTreeMap<String, u32>,
    avgdl: f64,
    params: Bm25Params,
}

/// Okapi IDF with the `1 +` inside the log so that every matching term
/// contributes a positive weight, even when it occurs in most documents.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

impl LexicalIndex {
    /// Indexes the name field of every vertex.
    pub fn build(graph: &Hypergraph, params: Bm25Params) -> LexicalIndex {
        LexicalIndex::from_documents(
            graph.vertices().map(|v| (v.key.clone(), v.name.clone())),
            params,
        )
    }

    pub fn from_documents<I>(docs: I, params: Bm25Params) -> LexicalIndex
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut postings: HashMap<String, Vec<(String, u32)>> = HashMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (key, text) in docs {
            let toks = terms(&text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &toks {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, freq) in tf {
                postings.entry(term).or_default().push((key.clone(), freq));
            }
            doc_lengths.insert(key, toks.len() as u32);
        }
        let avgdl = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.values().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64
        };
        LexicalIndex {
            postings,
            doc_lengths,
            avgdl,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lengths.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_length(&self, key: &str) -> Option<u32> {
        self.doc_lengths.get(key).copied()
    }

    pub fn term_frequency(&self, term: &str, key: &str) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|(k, _)| k == key))
            .map(|&(_, f)| f)
            .unwrap_or(0)
    }

    /// Keys with a positive score, best first; ties go to the smaller key.
    /// Repeated query terms count once.
    pub fn bm25_search(&self, query: &str, top_n: usize) -> Vec<(String, f64)> {
        let query_terms: BTreeSet<String> = terms(query).into_iter().collect();
        if query_terms.is_empty() || self.is_empty() || top_n == 0 {
            return Vec::new();
        }
        let n = self.doc_lengths.len();
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<&str, f64> = HashMap::new();
        for term in &query_terms {
            let Some(posting) = self.postings.get(term) else {
                continue;
            };
            let weight = idf(n, posting.len());
            for (key, freq) in posting {
                let tf = f64::from(*freq);
                let dl = f64::from(self.doc_lengths[key]);
                let norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 0.0 };
                let s = weight * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
                *scores.entry(key.as_str()).or_default() += s;
            }
        }
        let mut ranked: Vec<(String, f64)> = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(k, s)| (k.to_string(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top_n);
        ranked
    }
}
