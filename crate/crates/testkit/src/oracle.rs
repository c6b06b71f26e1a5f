//! Brute-force reaching-definition and slice oracles.
//!
//! Deliberately shares no code with the production dataflow pass: edges come
//! from a literal backward scan over the generator's own statement facts,
//! and slices are a plain transitive closure over those edges.

use std::collections::BTreeSet;

use crate::gen::GeneratedFunction;

/// One def-use edge between statement positions (0 = signature).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OracleEdge {
    pub def_pos: usize,
    pub use_pos: usize,
    pub variable: char,
}

/// For each (statement, used variable), scan backward and take the first
/// definer.
pub fn oracle_reaching_defs(function: &GeneratedFunction) -> BTreeSet<OracleEdge> {
    let mut edges = BTreeSet::new();
    for use_pos in 1..=function.body_len() {
        for variable in function.uses_at(use_pos) {
            for def_pos in (0..use_pos).rev() {
                if function.defs_at(def_pos).contains(&variable) {
                    edges.insert(OracleEdge {
                        def_pos,
                        use_pos,
                        variable,
                    });
                    break;
                }
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleDirection {
    Backward,
    Forward,
    Both,
}

/// Transitive closure over oracle edges from a seed statement.
///
/// Backward steps from a use to its definition, forward from a definition
/// to its uses; closure follows edges for every variable on visited
/// statements. A variable not referenced at the seed yields an empty set.
pub fn oracle_slice(
    function: &GeneratedFunction,
    edges: &BTreeSet<OracleEdge>,
    seed_pos: usize,
    variable: char,
    direction: OracleDirection,
) -> BTreeSet<usize> {
    if !function.references_at(seed_pos).contains(&variable) {
        return BTreeSet::new();
    }
    let mut result = BTreeSet::from([seed_pos]);
    if matches!(direction, OracleDirection::Backward | OracleDirection::Both) {
        closure(edges, seed_pos, false, &mut result);
    }
    if matches!(direction, OracleDirection::Forward | OracleDirection::Both) {
        closure(edges, seed_pos, true, &mut result);
    }
    result
}

fn closure(edges: &BTreeSet<OracleEdge>, seed: usize, forward: bool, out: &mut BTreeSet<usize>) {
    let mut frontier = vec![seed];
    let mut seen = BTreeSet::from([seed]);
    while let Some(current) = frontier.pop() {
        for edge in edges {
            let next = if forward {
                (edge.def_pos == current).then_some(edge.use_pos)
            } else {
                (edge.use_pos == current).then_some(edge.def_pos)
            };
            if let Some(next) = next {
                if seen.insert(next) {
                    out.insert(next);
                    frontier.push(next);
                }
            }
        }
    }
}
