//! Dual-focus semantic index: one ANN graph over every vertex description
//! plus one per layer, searched with quotas that shift between the global
//! and the target-layer graph according to the query's matching score.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ann::{AnnParams, Hnsw};
use crate::error::{Error, Result};
use crate::hypergraph::Layer;

pub const DFIDX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuotaParams {
    /// Base quota `k_b`.
    #[serde(rename = "k_b")]
    pub base: usize,
    /// Floor added to the global share (`k_min`).
    #[serde(rename = "k_min")]
    pub global_min: usize,
    /// Cap on the global share (`k_max`).
    #[serde(rename = "k_max")]
    pub global_max: usize,
}

impl Default for QuotaParams {
    fn default() -> Self {
        QuotaParams { base: 12, global_min: 5, global_max: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotas {
    pub global: usize,
    pub local: usize,
}

/// Global/local split for matching score `m`:
/// `k_G = min(ceil((1 - m/6)·k_b + k_min), k_max)`, `k_L = floor(m/6 · k_b)`,
/// evaluated in integers so no rounding happens before the ceil/floor.
pub fn quotas(m: i64, params: QuotaParams) -> Result<Quotas> {
    if !(1..=5).contains(&m) {
        return Err(Error::InvalidArgument(format!("matching score {m} outside 1..=5")));
    }
    if params.base == 0 || params.global_min > params.global_max {
        return Err(Error::InvalidArgument(format!("bad quota parameters {params:?}")));
    }
    let m = m as usize;
    let numerator = (6 - m) * params.base + 6 * params.global_min;
    let global = numerator.div_ceil(6).min(params.global_max);
    let local = m * params.base / 6;
    Ok(Quotas { global, local })
}

fn layer_of_key(key: &str) -> Result<Layer> {
    key.split_once('|')
        .and_then(|(code, _)| code.parse::<i64>().ok())
        .and_then(Layer::from_code)
        .ok_or_else(|| Error::InvalidArgument(format!("key {key} carries no layer prefix")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> EmbeddingTable {
        EmbeddingTable { dim, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, key: String, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "vector for {key} has dim {}, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        let norm = vector.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-5 {
            return Err(Error::InvalidArgument(format!("vector for {key} is not unit length ({norm})")));
        }
        layer_of_key(&key)?;
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug, Clone)]
struct KeyedGraph {
    keys: Vec<String>,
    graph: Hnsw,
}

impl KeyedGraph {
    fn build<'a>(entries: impl Iterator<Item = (&'a String, &'a Vec<f32>)>, params: AnnParams) -> KeyedGraph {
        let (keys, vectors): (Vec<String>, Vec<Vec<f32>>) =
            entries.map(|(k, v)| (k.clone(), v.clone())).unzip();
        KeyedGraph { keys, graph: Hnsw::build(vectors, params) }
    }

    fn search(&self, q: &[f32], k: usize) -> Vec<(String, f32)> {
        self.graph
            .search(q, k)
            .into_iter()
            .map(|(id, s)| (self.keys[id as usize].clone(), s))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DfIndex {
    table: EmbeddingTable,
    ann: AnnParams,
    quotas: QuotaParams,
    global: KeyedGraph,
    local: [KeyedGraph; 3],
}

#[derive(Serialize, Deserialize)]
struct DfIndexDocument {
    format_version: u32,
    ann: AnnParams,
    table: EmbeddingTable,
}

impl DfIndex {
    pub fn build(table: EmbeddingTable, ann: AnnParams) -> Result<DfIndex> {
        if table.is_empty() {
            return Err(Error::BuildFailure("cannot index an empty embedding table".into()));
        }
        let global = KeyedGraph::build(table.vectors.iter(), ann);
        let local = Layer::ALL.map(|layer| {
            let params = AnnParams { seed: ann.seed.wrapping_add(u64::from(layer.code())), ..ann };
            KeyedGraph::build(
                table
                    .vectors
                    .iter()
                    .filter(|(k, _)| layer_of_key(k).ok() == Some(layer)),
                params,
            )
        });
        Ok(DfIndex {
            table,
            ann,
            quotas: QuotaParams::default(),
            global,
            local,
        })
    }

    pub fn with_quotas(mut self, quotas: QuotaParams) -> DfIndex {
        self.quotas = quotas;
        self
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn quota_params(&self) -> QuotaParams {
        self.quotas
    }

    pub fn global_len(&self) -> usize {
        self.global.keys.len()
    }

    pub fn local_len(&self, layer: Layer) -> usize {
        self.local[layer.code() as usize - 1].keys.len()
    }

    /// Switches every graph between approximate and exhaustive search.
    pub fn set_exact(&mut self, exact: bool) {
        self.ann.exact = exact;
        *self = DfIndex::build(self.table.clone(), self.ann)
            .expect("table was non-empty at build")
            .with_quotas(self.quotas);
    }

    pub fn vector(&self, key: &str) -> Option<&[f32]> {
        self.table.vectors.get(key).map(Vec::as_slice)
    }

    /// The dual-focus ranking: global top-`k_G` hits, then target-layer
    /// top-`k_L` hits not already present.
    pub fn search(&self, query: &[f32], target_layer: Layer, m: i64) -> Result<Vec<String>> {
        if query.len() != self.table.dim {
            return Err(Error::InvalidArgument(format!(
                "query dim {} does not match index dim {}",
                query.len(),
                self.table.dim
            )));
        }
        let q = quotas(m, self.quotas)?;
        let mut seen = HashSet::new();
        let mut ranking = Vec::new();
        let global = self.global.search(query, q.global);
        let local = self.local[target_layer.code() as usize - 1].search(query, q.local);
        for (key, _) in global.into_iter().chain(local) {
            if seen.insert(key.clone()) {
                ranking.push(key);
            }
        }
        Ok(ranking)
    }

    pub fn to_document_string(&self) -> Result<String> {
        let doc = DfIndexDocument {
            format_version: DFIDX_FORMAT_VERSION,
            ann: self.ann,
            table: self.table.clone(),
        };
        let mut text = serde_json::to_string(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_document_string()?)?;
        Ok(())
    }

    /// Reads the embedding table and rebuilds the graphs from it.
    pub fn load(path: impl AsRef<Path>) -> Result<DfIndex> {
        let text = fs::read_to_string(path)?;
        let doc: DfIndexDocument =
            serde_json::from_str(&text).map_err(|e| Error::CorruptStore(e.to_string()))?;
        if doc.format_version != DFIDX_FORMAT_VERSION {
            return Err(Error::CorruptStore(format!(
                "unsupported index format version {}",
                doc.format_version
            )));
        }
        if doc.table.vectors.values().any(|v| v.len() != doc.table.dim) {
            return Err(Error::CorruptStore("vector dimension mismatch".into()));
        }
        DfIndex::build(doc.table, doc.ann).map_err(|e| Error::CorruptStore(e.to_string()))
    }
}
