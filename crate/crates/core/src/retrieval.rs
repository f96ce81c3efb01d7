//! Anchor recall: a BM25 channel over vertex names and a dual-focus vector
//! channel, fused by reciprocal rank, then spread onto source chunks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::df_index::{quotas, DfIndex};
use crate::error::Result;
use crate::gateway::Gateway;
use crate::hypergraph::Hypergraph;
use crate::lexical::LexicalIndex;
use crate::scores::{ChunkScores, ScoreMap};
use crate::strategy::{composite_query, Strategy};

pub const RRF_K0: usize = 60;

/// `s(v) = Σ 1/(k0 + rank)` over the rankings that contain `v`, ranks from 1.
/// A key repeated within one ranking counts at its first position only.
pub fn rrf_fuse(rankings: &[Vec<String>], k0: usize) -> ScoreMap {
    let mut fused = ScoreMap::new();
    for ranking in rankings {
        let mut seen = HashSet::new();
        for (i, key) in ranking.iter().enumerate() {
            if seen.insert(key) {
                fused.add(key.clone(), 1.0 / (k0 + i + 1) as f64);
            }
        }
    }
    fused
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub anchors: ScoreMap,
    pub df_ranking: Vec<String>,
    pub bm25_ranking: Vec<String>,
}

/// Runs both channels for a parsed strategy. The BM25 list is cut to the
/// same length budget `k_G + k_L` the vector channel gets.
pub fn retrieve_anchors(
    strategy: &Strategy,
    df: &DfIndex,
    lexical: &LexicalIndex,
    gateway: &Gateway,
    label: &str,
    k0: usize,
) -> Result<Anchors> {
    let q = quotas(strategy.matching_score, df.quota_params())?;
    let query_vec = gateway
        .embed(label, std::slice::from_ref(&strategy.rewrite_question))?
        .pop()
        .expect("one vector per text");
    let df_ranking = df.search(&query_vec, strategy.target_layer, strategy.matching_score)?;
    let bm25_ranking: Vec<String> = lexical
        .bm25_search(&composite_query(strategy), q.global + q.local)
        .into_iter()
        .map(|(k, _)| k)
        .collect();
    let anchors = rrf_fuse(&[bm25_ranking.clone(), df_ranking.clone()], k0);
    if anchors.is_empty() {
        log::warn!("no anchors recalled for {:?}", strategy.question);
    }
    Ok(Anchors { anchors, df_ranking, bm25_ranking })
}

/// Each vertex splits its score evenly over the chunks it came from.
pub fn chunk_relevance(scores: &ScoreMap, graph: &Hypergraph) -> Result<ChunkScores> {
    let mut chunks = ChunkScores::new();
    for (key, s) in scores.iter() {
        let degree = graph.chunk_degree(key)?;
        let vertex = graph.vertex(key).expect("degree lookup succeeded");
        for chunk in &vertex.chunk_ids {
            chunks.add(chunk.clone(), s / degree as f64);
        }
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{Chunk, Vertex};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn keys(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rrf_examples() {
        let both = rrf_fuse(&[keys(&["a", "b"]), keys(&["a"])], 60);
        assert_abs_diff_eq!(both.get("a"), 2.0 / 61.0, epsilon = 1e-15);
        assert_abs_diff_eq!(both.get("b"), 1.0 / 62.0, epsilon = 1e-15);
        let one = rrf_fuse(&[keys(&["a"]), keys(&[])], 60);
        assert_abs_diff_eq!(one.get("a"), 1.0 / 61.0, epsilon = 1e-15);
        assert!(rrf_fuse(&[vec![]], 60).is_empty());
        // in both lists beats the same rank in one
        let f = rrf_fuse(&[keys(&["x", "y"]), keys(&["z", "x"])], 60);
        assert!(f.get("x") > f.get("y"));
    }

    proptest! {
        #[test]
        fn rrf_monotone(a in proptest::collection::vec(0usize..30, 1..30), b in proptest::collection::vec(0usize..30, 0..30), pos in 0usize..30) {
            let dedup = |v: &Vec<usize>| { let mut s = HashSet::new(); v.iter().filter(|x| s.insert(**x)).map(|x| format!("k{x}")).collect::<Vec<_>>() };
            let (ra, rb) = (dedup(&a), dedup(&b));
            let base = rrf_fuse(&[ra.clone(), rb.clone()], 60);
            let i = pos % ra.len();
            if i > 0 {
                let mut better = ra.clone();
                better.swap(i, i - 1);
                let moved = &ra[i];
                prop_assert!(rrf_fuse(&[better, rb], 60).get(moved) >= base.get(moved));
            }
        }
    }

    fn graph() -> Hypergraph {
        let mut g = Hypergraph::new();
        for i in 0..3 {
            g.add_chunk(Chunk {
                id: format!("d#{i}"),
                source_title: "d".into(),
                text: "t".into(),
                token_count: 1,
                keywords: vec![],
            });
        }
        let spread = Vertex::entity("spread", "s", vec![]).unwrap().with_chunk("d#0").with_chunk("d#1").with_chunk("d#2");
        g.upsert_vertex(spread).unwrap();
        g.upsert_vertex(Vertex::entity("single", "s", vec![]).unwrap().with_chunk("d#1")).unwrap();
        g
    }

    #[test]
    fn chunk_relevance_splits_by_degree() {
        let g = graph();
        let c = chunk_relevance(&ScoreMap::from_pairs([("1|single", 0.9)]), &g).unwrap();
        assert_eq!(c.get("d#1"), 0.9);
        let c = chunk_relevance(&ScoreMap::from_pairs([("1|spread", 0.9)]), &g).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(c.get(&format!("d#{i}")), 0.3, epsilon = 1e-15);
        }
        let both = ScoreMap::from_pairs([("1|spread", 0.9), ("1|single", 0.4)]);
        assert_abs_diff_eq!(chunk_relevance(&both, &g).unwrap().total(), 1.3, epsilon = 1e-12);
        assert!(chunk_relevance(&ScoreMap::from_pairs([("1|nope", 1.0)]), &g).is_err());
    }
}
