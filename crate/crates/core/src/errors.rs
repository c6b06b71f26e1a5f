//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by graph mutation and persistence.
#[derive(Debug, Error)]
pub enum GraphError {
    /// A node with this id already exists but carries a different payload.
    #[error("id collision: node `{id}` already exists with a different payload")]
    IdCollision { id: String },

    #[error("unknown node `{id}`")]
    UnknownNode { id: String },

    #[error("edge kind {kind} does not carry a variable")]
    VariableOnNonDataflowEdge { kind: String },

    #[error("dataflow edge requires a variable name")]
    MissingDataflowVariable,

    #[error("dataflow edge endpoint `{id}` is not a Statement node")]
    NonStatementDataflowEndpoint { id: String },

    #[error("node `{id}` violates invariants: {detail}")]
    InvalidNode { id: String, detail: String },

    /// Persistence-level failure; `line` is the first malformed record (1-based).
    #[error("corrupt graph file at line {line}: {detail}")]
    CorruptFile { line: usize, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Errors raised while building a graph from a source tree.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("repository root `{path}` is not a readable directory")]
    UnreadableRoot { path: String },

    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Errors raised by retrieval-session tools.
#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown node `{id}`")]
    UnknownNode { id: String },

    #[error("unknown file `{path}`")]
    UnknownFile { path: String },

    #[error("invalid span: start {start} .. end {end}")]
    InvalidSpan { start: u32, end: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Errors raised by context bundling.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("strategy `{strategy}` requires a non-empty seed set")]
    EmptySeedSet { strategy: String },

    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Errors raised by gold-set extraction and the evaluation harness.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("malformed diff at line {line}: {detail}")]
    MalformedDiff { line: usize, detail: String },

    #[error("malformed predictions line {line}: {detail}")]
    MalformedPredictions { line: usize, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
