use igmirag_core::context::{fuse_chunk_scores, select_chunks, select_units, window_quotas, WindowParams};
use igmirag_core::hypergraph::{Chunk, Hypergraph, Vertex};
use igmirag_core::retrieval::chunk_relevance;
use igmirag_core::ScoreMap;
use proptest::prelude::*;

fn graph(n: usize, chunks: usize) -> Hypergraph {
    let mut g = Hypergraph::new();
    for c in 0..chunks {
        g.add_chunk(Chunk { id: format!("c{c}"), source_title: "t".into(), text: "x".into(), token_count: 1, keywords: vec![] });
    }
    for i in 0..n {
        let v = Vertex::entity(&format!("e{i}"), "d", vec![])
            .unwrap()
            .with_chunk(format!("c{}", i % chunks))
            .with_chunk(format!("c{}", (i * 7) % chunks));
        g.upsert_vertex(v).unwrap();
    }
    g
}

fn scores(n: usize, raw: &[u16]) -> ScoreMap {
    ScoreMap::from_pairs(raw.iter().enumerate().map(|(i, s)| (format!("1|e{}", i % n), *s as f64 / 1000.0)))
}

proptest! {
    #[test]
    fn budgets_are_respected(
        n in 1usize..80,
        chunks in 1usize..20,
        d in 1usize..=5,
        anchor_raw in proptest::collection::vec(1u16..1000, 1..10),
        ext_raw in proptest::collection::vec(1u16..1000, 0..80),
    ) {
        let g = graph(n, chunks);
        let anchors = scores(n, &anchor_raw);
        let extended = scores(n, &ext_raw);
        let budget = window_quotas(d, WindowParams::default()).unwrap();
        prop_assert_eq!((budget.top_ku, budget.top_kc), (5 * d, 2 * d));
        let units = select_units(&anchors, &extended, budget.top_ku);
        let extra = units.iter().filter(|(k, _)| !anchors.contains(k)).count();
        prop_assert!(extra <= budget.top_ku);
        prop_assert_eq!(units.len() - extra, anchors.len());
        let initial = chunk_relevance(&anchors, &g).unwrap();
        let fused = fuse_chunk_scores(&initial, &extended, &g, 0.5).unwrap();
        prop_assert!(select_chunks(&fused, budget.top_kc).len() <= budget.top_kc);
    }

    #[test]
    fn fusion_is_linear_in_the_weight(
        n in 1usize..40,
        chunks in 1usize..10,
        anchor_raw in proptest::collection::vec(1u16..1000, 1..10),
        ext_raw in proptest::collection::vec(1u16..1000, 1..40),
    ) {
        let g = graph(n, chunks);
        let initial = chunk_relevance(&scores(n, &anchor_raw), &g).unwrap();
        let extended = scores(n, &ext_raw);
        let at = |w| fuse_chunk_scores(&initial, &extended, &g, w).unwrap();
        let (zero, half, one) = (at(0.0), at(0.5), at(1.0));
        let spread = chunk_relevance(&extended, &g).unwrap();
        for c in 0..chunks {
            let id = format!("c{c}");
            prop_assert!((one.get(&id) - initial.get(&id)).abs() < 1e-12);
            prop_assert!((zero.get(&id) - spread.get(&id)).abs() < 1e-12);
            prop_assert!((half.get(&id) - (zero.get(&id) + one.get(&id)) / 2.0).abs() < 1e-12);
        }
    }
}
