//! Repository program-analysis engine.
//!
//! Builds a multi-granularity graph over a Python codebase (packages down to
//! individual statements, linked by containment, import, call, inheritance,
//! and intra-procedural def-use edges) and exposes retrieval, slicing,
//! context-bundling, and localization-evaluation layers on top of it.

pub mod build;
pub mod bundle;
pub mod errors;
pub mod frontend;
pub mod graph;
pub mod metrics;
pub mod persist;
pub mod service;
pub mod session;
pub mod slicer;
pub mod tfidf;

pub use build::{build_graph, BuildDiagnostics, BuildOutput};
pub use bundle::{
    build_context_bundle, parse_stack_trace, rank_suspect_regions, score_span, BundleStrategy,
    BundleWeights, ContextBundle, ScoredSpan, StackFrame, SuspectRegion,
};
pub use errors::{BuildError, BundleError, GraphError, MetricsError, SessionError};
pub use graph::{
    BuildMode, DefRole, EdgeKind, EntityNode, GraphBuilder, NodeKind, RepoGraph, TypedEdge, VarDef,
};
pub use metrics::{GoldSets, LocalizationReport, RankedPrediction};
pub use service::{TokenLedger, ToolRequest, ToolResponse, ToolService};
pub use session::{RetrievalSession, ScopeRecord, SearchHit, TraversalReport};
pub use slicer::{get_dataflow_slice, DataflowSlice, SliceDirection, SliceStep, StepRole};
