//! Relevance score maps over vertex keys or chunk ids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Key → positive score. Keys scoring zero are simply absent, so a lookup
/// of an unknown key reads as 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreMap {
    scores: BTreeMap<String, f64>,
}

/// Chunk id → relevance. Same representation as vertex scores.
pub type ChunkScores = ScoreMap;

impl ScoreMap {
    pub fn new() -> ScoreMap {
        ScoreMap::default()
    }

    /// Builds a map, summing repeated keys and dropping non-positive totals.
    pub fn from_pairs<I, K>(pairs: I) -> ScoreMap
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        let mut map = ScoreMap::new();
        for (k, s) in pairs {
            map.add(k, s);
        }
        map.scores.retain(|_, s| *s > 0.0);
        map
    }

    pub fn get(&self, key: &str) -> f64 {
        self.scores.get(key).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.scores.contains_key(key)
    }

    /// Adds `delta` to the key's score. Non-positive deltas on absent keys
    /// are ignored.
    pub fn add(&mut self, key: impl Into<String>, delta: f64) {
        let key = key.into();
        match self.scores.get_mut(&key) {
            Some(s) => *s += delta,
            None if delta > 0.0 => {
                self.scores.insert(key, delta);
            }
            None => {}
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.scores.keys()
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, f64)> {
        self.scores.iter().map(|(k, &s)| (k, s))
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }

    /// Entries by descending score, ties by ascending key.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.scores.iter().map(|(k, &s)| (k.clone(), s)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.scores
    }
}
