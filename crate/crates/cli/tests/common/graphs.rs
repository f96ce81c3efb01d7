//! Random layered hypergraphs for the property checks.

use igmirag_core::hypergraph::{Chunk, Hypergraph, Layer, Vertex};
use igmirag_core::ScoreMap;
use rand::seq::index::sample;
use rand::Rng;

/// A graph as plain lists, so an oracle can rebuild it without going
/// through the library. Entity names are already lowercase.
#[derive(Debug, Clone)]
pub struct Shape {
    pub entities: Vec<String>,
    /// (layer code, member names) with members distinct.
    pub relations: Vec<(u8, Vec<String>)>,
    /// Chunk ids per entity, then per relation.
    pub entity_chunks: Vec<Vec<String>>,
    pub relation_chunks: Vec<Vec<String>>,
    pub chunks: Vec<String>,
}

pub fn entity_key(name: &str) -> String {
    format!("1|{name}")
}

pub fn relation_key(layer: u8, members: &[String]) -> String {
    let mut m = members.to_vec();
    m.sort();
    format!("{layer}|{}", m.join("⊕"))
}

impl Shape {
    pub fn keys(&self) -> Vec<String> {
        self.entities
            .iter()
            .map(|e| entity_key(e))
            .chain(self.relations.iter().map(|(l, m)| relation_key(*l, m)))
            .collect()
    }

    pub fn build(&self) -> Hypergraph {
        let mut g = Hypergraph::new();
        for id in &self.chunks {
            g.add_chunk(Chunk {
                id: id.clone(),
                source_title: id.clone(),
                text: format!("passage {id}"),
                token_count: 2,
                keywords: vec![],
            });
        }
        for (e, chunks) in self.entities.iter().zip(&self.entity_chunks) {
            let mut v = Vertex::entity(e, &format!("about {e}"), vec![]).unwrap();
            for c in chunks {
                v = v.with_chunk(c.clone());
            }
            g.upsert_vertex(v).unwrap();
        }
        for ((layer, members), chunks) in self.relations.iter().zip(&self.relation_chunks) {
            let layer = Layer::from_code(*layer as i64).unwrap();
            let mut v = Vertex::relation(layer, members, &format!("links {}", members.join(" and ")), vec![]).unwrap();
            for c in chunks {
                v = v.with_chunk(c.clone());
            }
            g.upsert_vertex(v).unwrap();
        }
        g
    }
}

fn chunk_pick(rng: &mut impl Rng, chunks: &[String]) -> Vec<String> {
    let k = rng.random_range(1..=chunks.len().min(3));
    let mut picked: Vec<String> = sample(rng, chunks.len(), k).into_iter().map(|i| chunks[i].clone()).collect();
    picked.sort();
    picked
}

/// At most `max_vertices` vertices over all layers. Duplicate member sets
/// are skipped so every relation is its own vertex.
pub fn random_shape(rng: &mut impl Rng, max_vertices: usize) -> Shape {
    let n_entities = rng.random_range(2..=(max_vertices / 2).max(2));
    let budget = max_vertices.saturating_sub(n_entities);
    let n_pairs = rng.random_range(0..=budget * 2 / 3);
    let n_assoc = rng.random_range(0..=budget - n_pairs);
    let entities: Vec<String> = (0..n_entities).map(|i| format!("e{i}")).collect();
    let chunks: Vec<String> = (0..rng.random_range(1..=8)).map(|i| format!("doc{i}#0")).collect();

    let mut seen = std::collections::BTreeSet::new();
    let mut relations = Vec::new();
    for (layer, count) in [(2u8, n_pairs), (3u8, n_assoc)] {
        for _ in 0..count {
            let size = if layer == 2 { 2 } else { rng.random_range(3..=n_entities.clamp(3, 6)) };
            if size > n_entities {
                continue;
            }
            let mut members: Vec<String> =
                sample(rng, n_entities, size).into_iter().map(|i| entities[i].clone()).collect();
            members.sort();
            if seen.insert((layer, members.clone())) {
                relations.push((layer, members));
            }
        }
    }
    let entity_chunks = entities.iter().map(|_| chunk_pick(rng, &chunks)).collect();
    let relation_chunks = relations.iter().map(|_| chunk_pick(rng, &chunks)).collect();
    Shape { entities, relations, entity_chunks, relation_chunks, chunks }
}

/// Entities only: nothing can ever propagate.
pub fn isolated_shape(n: usize) -> Shape {
    let entities: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let chunks = vec!["doc#0".to_string()];
    Shape {
        entity_chunks: entities.iter().map(|_| chunks.clone()).collect(),
        entities,
        relations: vec![],
        relation_chunks: vec![],
        chunks,
    }
}

/// Anchor scores shaped like fused reciprocal ranks, with deliberate ties.
pub fn random_anchors(rng: &mut impl Rng, keys: &[String]) -> ScoreMap {
    let k = rng.random_range(1..=keys.len().min(8));
    let picked = sample(rng, keys.len(), k);
    ScoreMap::from_pairs(picked.into_iter().map(|i| {
        let r1 = rng.random_range(1..=20usize);
        let score = if rng.random_bool(0.3) {
            1.0 / (60 + r1) as f64
        } else {
            1.0 / (60 + r1) as f64 + 1.0 / (60 + rng.random_range(1..=20usize)) as f64
        };
        (keys[i].clone(), score)
    }))
}
