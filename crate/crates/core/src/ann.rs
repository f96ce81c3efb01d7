//! A small hierarchical navigable small-world graph over unit vectors.
//!
//! Construction is deterministic: nodes are inserted in the order given, and
//! level draws come from a seeded ChaCha stream. Similarity is the dot
//! product (cosine on unit vectors); equal similarities order by node id.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnParams {
    /// Links per node on upper levels; level 0 keeps twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
    /// Brute-force scan instead of graph search.
    pub exact: bool,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams {
            m: 16,
            ef_construction: 128,
            ef_search: 64,
            seed: 0x1d6a_5eed,
            exact: false,
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f32,
    id: u32,
}

impl Eq for Scored {}

// Greater = more similar; on equal similarity the smaller id is "greater".
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct Hnsw {
    params: AnnParams,
    vectors: Vec<Vec<f32>>,
    // node -> level -> neighbor ids
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    top_level: usize,
}

impl Hnsw {
    pub fn build(vectors: Vec<Vec<f32>>, params: AnnParams) -> Hnsw {
        let mut index = Hnsw {
            params,
            vectors: Vec::with_capacity(vectors.len()),
            links: Vec::with_capacity(vectors.len()),
            entry: None,
            top_level: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let level_mult = 1.0 / (params.m.max(2) as f64).ln();
        for v in vectors {
            let u: f64 = rng.random::<f64>();
            let level = (-(1.0 - u).ln() * level_mult).floor() as usize;
            index.insert(v, level.min(16));
        }
        index
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn sim(&self, q: &[f32], id: u32) -> Scored {
        Scored { sim: dot(q, &self.vectors[id as usize]), id }
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, vector: Vec<f32>, level: usize) {
        let id = self.vectors.len() as u32;
        self.vectors.push(vector);
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(mut ep) = self.entry else {
            self.entry = Some(id);
            self.top_level = level;
            return;
        };
        let q = self.vectors[id as usize].clone();
        for lc in (level + 1..=self.top_level).rev() {
            ep = self.greedy(&q, ep, lc);
        }
        let mut entry_points = vec![ep];
        for lc in (0..=level.min(self.top_level)).rev() {
            let found = self.search_layer(&q, &entry_points, self.params.ef_construction, lc);
            let chosen: Vec<u32> = found.iter().take(self.params.m).map(|s| s.id).collect();
            self.links[id as usize][lc] = chosen.clone();
            for &n in &chosen {
                self.links[n as usize][lc].push(id);
                if self.links[n as usize][lc].len() > self.max_links(lc) {
                    self.prune(n, lc);
                }
            }
            entry_points = found.iter().map(|s| s.id).collect();
        }
        if level > self.top_level {
            self.top_level = level;
            self.entry = Some(id);
        }
    }

    fn prune(&mut self, node: u32, level: usize) {
        let base = self.vectors[node as usize].clone();
        let mut scored: Vec<Scored> =
            self.links[node as usize][level].iter().map(|&n| self.sim(&base, n)).collect();
        scored.sort_by(|a, b| b.cmp(a));
        scored.truncate(self.max_links(level));
        self.links[node as usize][level] = scored.into_iter().map(|s| s.id).collect();
    }

    fn greedy(&self, q: &[f32], mut ep: u32, level: usize) -> u32 {
        let mut best = self.sim(q, ep);
        loop {
            let mut improved = false;
            for &n in &self.links[ep as usize][level] {
                let s = self.sim(q, n);
                if s > best {
                    best = s;
                    improved = true;
                }
            }
            if !improved {
                return ep;
            }
            ep = best.id;
        }
    }

    /// Best-first beam search on one level; results best first.
    fn search_layer(&self, q: &[f32], entry: &[u32], ef: usize, level: usize) -> Vec<Scored> {
        let mut visited: HashSet<u32> = entry.iter().copied().collect();
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        // min-heap of the current best `ef` via Reverse
        let mut results: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
        for &e in entry {
            let s = self.sim(q, e);
            candidates.push(s);
            results.push(std::cmp::Reverse(s));
            if results.len() > ef {
                results.pop();
            }
        }
        while let Some(c) = candidates.pop() {
            let worst = results.peek().map(|r| r.0);
            if let Some(w) = worst {
                if results.len() >= ef && c < w {
                    break;
                }
            }
            let Some(neighbors) = self.links[c.id as usize].get(level) else {
                continue;
            };
            for &n in neighbors {
                if !visited.insert(n) {
                    continue;
                }
                let s = self.sim(q, n);
                let admit = results.len() < ef || results.peek().is_some_and(|w| s > w.0);
                if admit {
                    candidates.push(s);
                    results.push(std::cmp::Reverse(s));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Top-`k` node ids with similarities, best first.
    pub fn search(&self, q: &[f32], k: usize) -> Vec<(u32, f32)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        if self.params.exact {
            return self.scan(q, k);
        }
        let mut ep = self.entry.expect("non-empty index has an entry point");
        for lc in (1..=self.top_level).rev() {
            ep = self.greedy(q, ep, lc);
        }
        self.search_layer(q, &[ep], self.params.ef_search.max(k), 0)
            .into_iter()
            .take(k)
            .map(|s| (s.id, s.sim))
            .collect()
    }

    /// Exhaustive top-`k`, the reference the graph search approximates.
    pub fn scan(&self, q: &[f32], k: usize) -> Vec<(u32, f32)> {
        let mut all: Vec<Scored> = (0..self.vectors.len() as u32).map(|i| self.sim(q, i)).collect();
        all.sort_by(|a, b| b.cmp(a));
        all.into_iter().take(k).map(|s| (s.id, s.sim)).collect()
    }
}
