//! Bounded BFS traversal against an independent oracle on random graphs.

use std::collections::HashMap;
use std::sync::Arc;

use arise_core::graph::EdgeKind;
use arise_core::session::RetrievalSession;
use arise_testkit::randgraph::{oracle_bfs, random_call_graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn traversal_matches_oracle_bfs_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBF5);
    for seed in 0..100u64 {
        let random = random_call_graph(seed);
        let node_count = random.node_ids.len();
        let session = RetrievalSession::open(Arc::new(random.graph), "/nonexistent");
        let kind_sets: [&[EdgeKind]; 3] = [
            &[EdgeKind::Calls],
            &[EdgeKind::CalledBy],
            &[EdgeKind::Calls, EdgeKind::CalledBy],
        ];
        // random.graph was moved into the session; rebuild for adjacency.
        let random = random_call_graph(seed);
        for kinds in kind_sets {
            let adjacency = random.adjacency(kinds);
            let seed_index = rng.gen_range(0..node_count);
            let max_hops = rng.gen_range(1..=5u32);

            // Unbounded budget: hop distances must equal the oracle.
            let report = session
                .traverse_relations(
                    &random.node_ids[seed_index],
                    kinds,
                    max_hops,
                    node_count + 1,
                )
                .unwrap();
            let expected = oracle_bfs(&adjacency, seed_index, max_hops);
            let actual: HashMap<usize, u32> = report
                .nodes
                .iter()
                .map(|n| (random.index_of(&n.id), n.hop))
                .collect();
            assert_eq!(actual, expected, "seed {seed} kinds {kinds:?}");
            let beyond = oracle_bfs(&adjacency, seed_index, max_hops + 1)
                .values()
                .any(|d| *d == max_hops + 1);
            assert_eq!(report.truncated, beyond, "hop-cap truncation, seed {seed}");

            // Layers are sorted by id.
            for pair in report.nodes.windows(2) {
                if pair[0].hop == pair[1].hop {
                    assert!(pair[0].id < pair[1].id);
                }
            }

            // Random budget: caps respected, distances still correct.
            let budget = rng.gen_range(1..=node_count);
            let bounded = session
                .traverse_relations(&random.node_ids[seed_index], kinds, max_hops, budget)
                .unwrap();
            assert!(bounded.nodes.len() <= budget);
            for node in &bounded.nodes {
                assert!(node.hop <= max_hops);
                assert_eq!(expected[&random.index_of(&node.id)], node.hop);
            }
            if bounded.nodes.len() < expected.len() {
                assert!(bounded.truncated);
            }
        }
    }
}
