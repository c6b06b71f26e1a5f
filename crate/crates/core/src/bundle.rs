//! Context assembly: scored spans, greedy budget packing, and heuristic
//! suspect ranking.
//!
//! Every candidate span is scored with the same linear rule:
//!
//! ```text
//! score = alpha * rel + beta * prox + gamma * [in_slice]
//! ```
//!
//! where `rel` is TF-IDF relevance to the issue text, `prox` is inverse hop
//! distance to the nearest seed over the call/import subgraph, and the
//! indicator marks spans that overlap dataflow-slice evidence. The weights
//! are fixed constants, not learned.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::errors::{BundleError, SessionError};
use crate::graph::EdgeKind;
use crate::session::RetrievalSession;
use crate::slicer::DataflowSlice;

pub const DEFAULT_BUNDLE_BUDGET: u64 = 8_000;
/// Hop cap for proximity: spans further than this from every seed score 0.
pub const PROXIMITY_HOP_CAP: u32 = 4;
/// How many search hits seed the suspect ranker alongside stack frames.
const SUSPECT_SEARCH_SEEDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleStrategy {
    StructuralOnly,
    SlicesOnly,
    Hybrid,
}

impl BundleStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "structural_only" => Some(BundleStrategy::StructuralOnly),
            "slices_only" => Some(BundleStrategy::SlicesOnly),
            "hybrid" => Some(BundleStrategy::Hybrid),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BundleStrategy::StructuralOnly => "structural_only",
            BundleStrategy::SlicesOnly => "slices_only",
            BundleStrategy::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for BundleWeights {
    fn default() -> Self {
        BundleWeights {
            alpha: 1.0,
            beta: 0.5,
            gamma: 1.5,
        }
    }
}

impl BundleWeights {
    /// structural_only zeroes the slice bonus; slices_only keeps only it.
    pub fn for_strategy(strategy: BundleStrategy) -> Self {
        let defaults = BundleWeights::default();
        match strategy {
            BundleStrategy::StructuralOnly => BundleWeights {
                gamma: 0.0,
                ..defaults
            },
            BundleStrategy::SlicesOnly => BundleWeights {
                alpha: 0.0,
                beta: 0.0,
                ..defaults
            },
            BundleStrategy::Hybrid => defaults,
        }
    }
}

/// The scoring rule, exactly as the weights state it.
pub fn score_span(rel: f64, prox: f64, in_slice: bool, weights: &BundleWeights) -> f64 {
    weights.alpha * rel + weights.beta * prox + weights.gamma * f64::from(in_slice as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub entity: String,
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
    pub rel: f64,
    pub prox: f64,
    pub in_slice: bool,
    pub score: f64,
    pub token_cost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub strategy: BundleStrategy,
    pub budget_tokens: u64,
    /// Packed spans in packing order (non-increasing score).
    pub spans: Vec<ScoredSpan>,
    pub total_tokens: u64,
    pub skipped_count: usize,
}

/// Deterministic, model-agnostic token estimate: ceil(chars / 4).
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Multi-source hop distances from `seeds` along `kinds`, capped at `max_hops`.
fn hop_distances(
    session: &RetrievalSession,
    seeds: &BTreeSet<String>,
    kinds: &[EdgeKind],
    max_hops: u32,
) -> HashMap<String, u32> {
    let graph = session.graph();
    let mut distance: HashMap<String, u32> = HashMap::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    for seed in seeds {
        distance.insert(seed.clone(), 0);
        queue.push_back(seed.clone());
    }
    while let Some(current) = queue.pop_front() {
        let d = distance[&current];
        if d == max_hops {
            continue;
        }
        for kind in kinds {
            for neighbor in graph.neighbors(&current, *kind) {
                if !distance.contains_key(&neighbor.node) {
                    distance.insert(neighbor.node.clone(), d + 1);
                    queue.push_back(neighbor.node.clone());
                }
            }
        }
    }
    distance
}

struct Candidate {
    entity: String,
    file: String,
    start_line: u32,
    end_line: u32,
    rel: f64,
    prox: f64,
    in_slice: bool,
}

/// Assemble a ranked, budget-packed set of code spans.
///
/// Candidates are the function/method bodies within the proximity cap of the
/// seeds plus every slice-step span; overlapping same-file spans merge,
/// keeping the strongest rel/prox and the union of slice membership. Spans
/// are then greedily packed in descending score order; one that does not fit
/// is skipped and packing continues.
pub fn build_context_bundle(
    session: &RetrievalSession,
    seeds: &[String],
    slices: &[DataflowSlice],
    strategy: BundleStrategy,
    issue_text: &str,
    budget_tokens: u64,
) -> Result<ContextBundle, BundleError> {
    if seeds.is_empty() && strategy != BundleStrategy::SlicesOnly {
        return Err(BundleError::EmptySeedSet {
            strategy: strategy.as_str().to_string(),
        });
    }
    let graph = session.graph();
    let mut seed_set = BTreeSet::new();
    for seed in seeds {
        if graph.node(seed).is_none() {
            return Err(BundleError::Session(SessionError::UnknownNode {
                id: seed.clone(),
            }));
        }
        seed_set.insert(seed.clone());
    }

    let weights = BundleWeights::for_strategy(strategy);
    let query = session.query_vector(issue_text);
    let slice_spans: Vec<(&str, u32, u32)> = slices
        .iter()
        .flat_map(|s| s.steps.iter())
        .map(|step| (step.file.as_str(), step.start_line, step.end_line))
        .collect();
    let overlaps_slice = |file: &str, start: u32, end: u32| {
        slice_spans
            .iter()
            .any(|(f, s, e)| *f == file && *s <= end && start <= *e)
    };

    let distance = hop_distances(
        session,
        &seed_set,
        &[
            EdgeKind::Calls,
            EdgeKind::CalledBy,
            EdgeKind::Imports,
            EdgeKind::ImportedBy,
        ],
        PROXIMITY_HOP_CAP,
    );

    let mut candidates: Vec<Candidate> = Vec::new();
    for (id, d) in &distance {
        let node = graph.node(id).expect("distance keys are graph nodes");
        if !node.kind.is_callable() {
            continue;
        }
        candidates.push(Candidate {
            entity: id.clone(),
            file: node.file_path.clone(),
            start_line: node.start_line,
            end_line: node.end_line,
            rel: session.relevance(&query, id),
            prox: 1.0 / (1.0 + f64::from(*d)),
            in_slice: overlaps_slice(&node.file_path, node.start_line, node.end_line),
        });
    }
    for slice in slices {
        for step in &slice.steps {
            candidates.push(Candidate {
                entity: step.statement.clone(),
                file: step.file.clone(),
                start_line: step.start_line,
                end_line: step.end_line,
                rel: session.relevance(&query, &step.statement),
                prox: distance
                    .get(&step.statement)
                    .map(|d| 1.0 / (1.0 + f64::from(*d)))
                    .unwrap_or(0.0),
                in_slice: true,
            });
        }
    }

    let merged = merge_overlapping(candidates, &weights);
    let mut scored: Vec<ScoredSpan> = Vec::with_capacity(merged.len());
    for candidate in merged {
        let span =
            session.get_code_span(&candidate.file, candidate.start_line, candidate.end_line)?;
        scored.push(ScoredSpan {
            score: score_span(candidate.rel, candidate.prox, candidate.in_slice, &weights),
            token_cost: estimate_tokens(&span.text),
            entity: candidate.entity,
            file: candidate.file,
            start_line: candidate.start_line,
            end_line: candidate.end_line,
            rel: candidate.rel,
            prox: candidate.prox,
            in_slice: candidate.in_slice,
        });
    }
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.file.cmp(&b.file))
            .then_with(|| a.start_line.cmp(&b.start_line))
    });

    let mut bundle = ContextBundle {
        strategy,
        budget_tokens,
        spans: Vec::new(),
        total_tokens: 0,
        skipped_count: 0,
    };
    for span in scored {
        if bundle.total_tokens + span.token_cost <= budget_tokens {
            bundle.total_tokens += span.token_cost;
            bundle.spans.push(span);
        } else {
            bundle.skipped_count += 1;
        }
    }
    Ok(bundle)
}

/// Merge same-file overlapping candidates; rel/prox take the maximum and
/// slice membership the union, so merging never lowers a span's score.
fn merge_overlapping(mut candidates: Vec<Candidate>, weights: &BundleWeights) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        (&a.file, a.start_line, a.end_line, &a.entity).cmp(&(
            &b.file,
            b.start_line,
            b.end_line,
            &b.entity,
        ))
    });
    let mut merged: Vec<Candidate> = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        match merged.last_mut() {
            Some(last) if last.file == candidate.file && candidate.start_line <= last.end_line => {
                last.end_line = last.end_line.max(candidate.end_line);
                // Keep the strongest constituent as the representative id.
                let last_score = score_span(last.rel, last.prox, last.in_slice, weights);
                let cand_score =
                    score_span(candidate.rel, candidate.prox, candidate.in_slice, weights);
                if cand_score > last_score {
                    last.entity = candidate.entity;
                }
                last.rel = last.rel.max(candidate.rel);
                last.prox = last.prox.max(candidate.prox);
                last.in_slice |= candidate.in_slice;
            }
            _ => merged.push(candidate),
        }
    }
    merged
}

/// One parsed interpreter traceback frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackFrame {
    pub file: String,
    pub line: u32,
    pub function: String,
}

/// Extract `File "...", line N, in name` frames; other lines are ignored.
pub fn parse_stack_trace(text: &str) -> Vec<StackFrame> {
    let pattern = regex::Regex::new(r#"File "([^"]+)", line (\d+), in (\S+)"#)
        .expect("frame pattern is valid");
    pattern
        .captures_iter(text)
        .filter_map(|caps| {
            Some(StackFrame {
                file: caps[1].to_string(),
                line: caps[2].parse().ok()?,
                function: caps[3].to_string(),
            })
        })
        .collect()
}

/// One ranked suspect with its score components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspectRegion {
    pub entity: String,
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
    pub rel: f64,
    pub prox: f64,
    pub in_slice: bool,
    pub score: f64,
}

/// Heuristic ranking of suspicious functions for an issue.
///
/// Seeds are stack-frame functions (grounded via enclosing-scope lookup)
/// united with search hits filtered to functions and methods; the candidate
/// set grows two hops through the call subgraph. Slice membership comes
/// from the session registry, so the ranking sharpens as slices accumulate.
pub fn rank_suspect_regions(
    session: &RetrievalSession,
    issue_text: &str,
    stack_trace: Option<&str>,
) -> Vec<SuspectRegion> {
    let graph = session.graph();
    let mut seeds: BTreeSet<String> = BTreeSet::new();
    for frame in parse_stack_trace(stack_trace.unwrap_or_default()) {
        let Some(file) = resolve_frame_file(session, &frame.file) else {
            continue;
        };
        if let Ok(record) = session.get_enclosing_scopes(&file, frame.line) {
            if let Some(function) = record.function {
                seeds.insert(function);
            }
        }
    }
    for hit in session.search_entities(issue_text, SUSPECT_SEARCH_SEEDS) {
        if graph
            .node(&hit.entity)
            .is_some_and(|n| n.kind.is_callable())
        {
            seeds.insert(hit.entity);
        }
    }
    if seeds.is_empty() {
        return Vec::new();
    }

    let weights = BundleWeights::default();
    let query = session.query_vector(issue_text);
    let distance = hop_distances(session, &seeds, &[EdgeKind::Calls, EdgeKind::CalledBy], 2);
    let mut ranked: Vec<SuspectRegion> = Vec::new();
    for (id, d) in &distance {
        let node = graph.node(id).expect("distance keys are graph nodes");
        if !node.kind.is_callable() {
            continue;
        }
        let rel = session.relevance(&query, id);
        let prox = 1.0 / (1.0 + f64::from(*d));
        let in_slice = session.span_in_registry(&node.file_path, node.start_line, node.end_line);
        ranked.push(SuspectRegion {
            entity: id.clone(),
            file: node.file_path.clone(),
            start_line: node.start_line,
            end_line: node.end_line,
            rel,
            prox,
            in_slice,
            score: score_span(rel, prox, in_slice, &weights),
        });
    }
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.entity.cmp(&b.entity))
    });
    ranked
}

/// Stack frames often carry absolute paths; fall back to a unique suffix
/// match against the files the graph knows.
fn resolve_frame_file(session: &RetrievalSession, frame_file: &str) -> Option<String> {
    let normalized = frame_file.replace('\\', "/");
    if session.is_known_file(&normalized) {
        return Some(normalized);
    }
    let matches: Vec<&str> = session
        .known_files()
        .filter(|known| normalized.ends_with(&format!("/{known}")))
        .collect();
    match matches.as_slice() {
        [unique] => Some((*unique).to_string()),
        _ => None,
    }
}
