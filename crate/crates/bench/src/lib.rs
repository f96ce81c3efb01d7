//! Synthetic workloads for the criterion benches. Everything is seeded, so
//! two runs measure the same inputs.

use igmirag_core::hypergraph::{Chunk, Hypergraph, Layer, Vertex};
use igmirag_core::ScoreMap;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: [&str; 12] = [
    "harbour", "ledger", "glass", "river", "guild", "archive", "tower", "orchard", "mill", "bridge", "market", "chapel",
];

fn word(i: usize) -> String {
    format!("{} {i}", NAMES[i % NAMES.len()])
}

/// `entities` entities spread over `entities / 20 + 1` chunks, plus random
/// pairs and three-to-five member associations.
pub fn synthetic_graph(entities: usize, pairs: usize, associations: usize, seed: u64) -> Hypergraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Hypergraph::new();
    let chunks = entities / 20 + 1;
    for c in 0..chunks {
        g.add_chunk(Chunk {
            id: format!("doc{c}#0"),
            source_title: format!("doc{c}"),
            text: format!("synthetic passage {c}"),
            token_count: 3,
            keywords: vec![],
        });
    }
    let chunk = |rng: &mut ChaCha8Rng| format!("doc{}#0", rng.random_range(0..chunks));
    for i in 0..entities {
        let v = Vertex::entity(&word(i), &format!("the {} numbered {i}", NAMES[i % NAMES.len()]), vec![])
            .expect("entity name");
        g.upsert_vertex(v.with_chunk(chunk(&mut rng))).expect("entity");
    }
    for (layer, count) in [(Layer::PairRelation, pairs), (Layer::MultiAssociation, associations)] {
        for _ in 0..count {
            let size = if layer == Layer::PairRelation { 2 } else { rng.random_range(3..=5).min(entities) };
            let members: Vec<String> = sample(&mut rng, entities, size).into_iter().map(word).collect();
            let v = Vertex::relation(layer, &members, "linked in a synthetic passage", vec![]).expect("relation");
            g.upsert_vertex(v.with_chunk(chunk(&mut rng))).expect("relation");
        }
    }
    g
}

/// `k` anchors drawn from every layer, scored like fused reciprocal ranks.
pub fn anchors(graph: &Hypergraph, k: usize, seed: u64) -> ScoreMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<&String> = graph.vertices().map(|v| &v.key).collect();
    let picked = sample(&mut rng, keys.len(), k.min(keys.len()));
    ScoreMap::from_pairs(picked.into_iter().enumerate().map(|(r, i)| (keys[i].clone(), 1.0 / (61 + r) as f64)))
}

/// Unit-length vectors with uniform components before normalising.
pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(f32::EPSILON);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Two rankings of length `len` over a shared pool of `2 * len` keys.
pub fn rankings(len: usize, seed: u64) -> [Vec<String>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut one = || sample(&mut rng, 2 * len, len).into_iter().map(|i| format!("k{i}")).collect();
    [one(), one()]
}
