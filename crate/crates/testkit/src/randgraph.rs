//! Random call graphs plus an independent BFS used to check traversal.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arise_core::graph::{BuildMode, EdgeKind, EntityNode, GraphBuilder, NodeKind, RepoGraph};

pub struct RandomGraph {
    pub graph: RepoGraph,
    pub node_ids: Vec<String>,
    /// Directed Calls edges as index pairs; mirrors are implied.
    pub calls: Vec<(usize, usize)>,
}

/// Build a random graph of up to 200 synthetic function nodes with Calls
/// edges (and their CalledBy mirrors).
pub fn random_call_graph(seed: u64) -> RandomGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node_count = rng.gen_range(2..=200);
    let mut builder = GraphBuilder::new(BuildMode::Full);
    let mut node_ids = Vec::with_capacity(node_count);
    for index in 0..node_count {
        let start = (index as u32) * 10 + 1;
        let node = EntityNode::new(
            NodeKind::Function,
            format!("n{index:03}"),
            format!("syn.n{index:03}"),
            "syn.py",
            start,
            start + 5,
        );
        node_ids.push(builder.upsert_node(node).expect("synthetic node is valid"));
    }
    let edge_count = rng.gen_range(0..=node_count * 3);
    let mut calls = Vec::new();
    for _ in 0..edge_count {
        let src = rng.gen_range(0..node_count);
        let dst = rng.gen_range(0..node_count);
        if src == dst {
            continue;
        }
        builder
            .connect(&node_ids[src], &node_ids[dst], EdgeKind::Calls, None)
            .expect("endpoints exist");
        calls.push((src, dst));
    }
    calls.sort_unstable();
    calls.dedup();
    RandomGraph {
        graph: builder.freeze(),
        node_ids,
        calls,
    }
}

impl RandomGraph {
    /// Adjacency restricted to the requested kinds (Calls follows the edge,
    /// CalledBy its mirror).
    pub fn adjacency(&self, kinds: &[EdgeKind]) -> Vec<Vec<usize>> {
        let mut adjacency = vec![Vec::new(); self.node_ids.len()];
        for (src, dst) in &self.calls {
            if kinds.contains(&EdgeKind::Calls) {
                adjacency[*src].push(*dst);
            }
            if kinds.contains(&EdgeKind::CalledBy) {
                adjacency[*dst].push(*src);
            }
        }
        adjacency
    }

    pub fn index_of(&self, id: &str) -> usize {
        self.node_ids
            .iter()
            .position(|candidate| candidate == id)
            .expect("id belongs to this graph")
    }
}

/// Plain BFS hop distances up to `max_hops`.
pub fn oracle_bfs(adjacency: &[Vec<usize>], seed: usize, max_hops: u32) -> HashMap<usize, u32> {
    let mut distance = HashMap::from([(seed, 0u32)]);
    let mut queue = VecDeque::from([seed]);
    while let Some(current) = queue.pop_front() {
        let d = distance[&current];
        if d == max_hops {
            continue;
        }
        for &next in &adjacency[current] {
            if let std::collections::hash_map::Entry::Vacant(slot) = distance.entry(next) {
                slot.insert(d + 1);
                queue.push_back(next);
            }
        }
    }
    distance
}
