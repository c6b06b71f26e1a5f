//! Dataflow slicing: bounded BFS over def-use edges from a seed
//! (file, line, variable), backward, forward, or both, stopping at function
//! boundaries.
//!
//! Traversal follows edges for **all** variables on visited statements, so a
//! backward slice reports the transitive provenance of the seed value
//! (y came from x, x came from a parameter). The per-step `variable` field
//! records the variable that linked the step into the slice.

use serde::{Deserialize, Serialize};

use crate::errors::SessionError;
use crate::graph::{BuildMode, DefRole, EdgeKind, EntityNode};
use crate::session::RetrievalSession;

pub const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceDirection {
    Backward,
    Forward,
    Both,
}

impl SliceDirection {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "backward" => Some(SliceDirection::Backward),
            "forward" => Some(SliceDirection::Forward),
            "both" => Some(SliceDirection::Both),
            _ => None,
        }
    }
}

/// Role of the variable at a slice step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRole {
    Parameter,
    Definition,
    AugmentedAssignment,
    Use,
    Seed,
}

/// One evidence record in a slice, ordered by source position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStep {
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
    pub variable: String,
    pub role: StepRole,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataflowSlice {
    pub steps: Vec<SliceStep>,
    pub direction: SliceDirection,
    pub truncated: bool,
    /// Human-readable diagnostic; non-empty exactly when `steps` is empty.
    pub note: String,
}

impl DataflowSlice {
    fn empty(direction: SliceDirection, note: impl Into<String>) -> Self {
        DataflowSlice {
            steps: Vec::new(),
            direction,
            truncated: false,
            note: note.into(),
        }
    }
}

fn role_for(node: &EntityNode, variable: &str) -> StepRole {
    match node.def_role_of(variable) {
        Some(DefRole::Parameter) => StepRole::Parameter,
        Some(DefRole::Augmented) => StepRole::AugmentedAssignment,
        Some(DefRole::Definition) | Some(DefRole::LoopTarget) | Some(DefRole::WithTarget) => {
            StepRole::Definition
        }
        None => StepRole::Use,
    }
}

/// Trace how `variable` flows through its enclosing function.
///
/// The seed line maps to the Statement node whose span contains it
/// (innermost function first). Backward follows DataflowUseDef edges,
/// forward follows DataflowDefUse, `both` is the union of the two BFS
/// results under a shared `max_steps` budget. Every returned step's span is
/// appended to the session slice registry.
pub fn get_dataflow_slice(
    session: &RetrievalSession,
    file: &str,
    line: u32,
    variable: &str,
    direction: SliceDirection,
    max_steps: usize,
) -> Result<DataflowSlice, SessionError> {
    if !session.is_known_file(file) {
        return Err(SessionError::UnknownFile {
            path: file.to_string(),
        });
    }
    if session.graph().build_mode() == BuildMode::Coarse {
        return Ok(DataflowSlice::empty(
            direction,
            "graph was built in coarse mode and carries no statement-level dataflow; \
             use get_code_span to inspect the source directly",
        ));
    }
    let Some(seed) = session.statement_at(file, line) else {
        return Ok(DataflowSlice::empty(
            direction,
            format!(
                "no statement node covers {file}:{line} (outside any analyzed function); \
                 use get_code_span as the fallback"
            ),
        ));
    };
    if !seed.references(variable) {
        return Ok(DataflowSlice::empty(
            direction,
            format!("variable `{variable}` is not referenced at the seed statement {file}:{line}"),
        ));
    }

    // (statement id, linking variable), keyed by id; the seed is step zero.
    let mut visited: Vec<(String, String)> = vec![(seed.id.clone(), variable.to_string())];
    let mut budget = max_steps;
    let mut truncated = false;
    let kinds: &[EdgeKind] = match direction {
        SliceDirection::Backward => &[EdgeKind::DataflowUseDef],
        SliceDirection::Forward => &[EdgeKind::DataflowDefUse],
        SliceDirection::Both => &[EdgeKind::DataflowUseDef, EdgeKind::DataflowDefUse],
    };
    for kind in kinds {
        let exhausted = bfs(session, &seed.id, *kind, &mut visited, &mut budget);
        truncated |= exhausted;
    }

    let mut steps: Vec<SliceStep> = visited
        .into_iter()
        .map(|(id, link_var)| {
            let node = session.graph().node(&id).expect("visited node exists");
            let role = if id == seed.id {
                StepRole::Seed
            } else {
                role_for(node, &link_var)
            };
            SliceStep {
                file: node.file_path.clone(),
                start_line: node.start_line,
                end_line: node.end_line,
                variable: link_var,
                role,
                statement: id,
            }
        })
        .collect();
    steps.sort_by(|a, b| {
        a.start_line
            .cmp(&b.start_line)
            .then_with(|| a.statement.cmp(&b.statement))
    });
    session.record_slice_spans(
        steps
            .iter()
            .map(|s| (s.file.clone(), s.start_line, s.end_line)),
    );
    Ok(DataflowSlice {
        steps,
        direction,
        truncated,
        note: String::new(),
    })
}

/// One-direction BFS from the seed over `kind` edges, spending `budget`
/// newly visited statements at most. Returns true when halted with frontier
/// left over.
fn bfs(
    session: &RetrievalSession,
    seed_id: &str,
    kind: EdgeKind,
    visited: &mut Vec<(String, String)>,
    budget: &mut usize,
) -> bool {
    let graph = session.graph();
    let mut queue: std::collections::VecDeque<String> =
        std::collections::VecDeque::from([seed_id.to_string()]);
    while let Some(current) = queue.pop_front() {
        for neighbor in graph.neighbors(&current, kind) {
            if visited.iter().any(|(id, _)| *id == neighbor.node) {
                continue;
            }
            if *budget == 0 {
                return true;
            }
            *budget -= 1;
            visited.push((neighbor.node.clone(), neighbor.variable.clone()));
            queue.push_back(neighbor.node.clone());
        }
    }
    false
}
