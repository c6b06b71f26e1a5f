//! JSON tool facade: schema-annotated operations over a retrieval session.
//!
//! Wire shape: one request object per call, `{id, tool, arguments}`, answered
//! by `{id, ok, result}` or `{id, ok, error: {code, message}}`. The request
//! id is echoed exactly once; a malformed request never kills the service,
//! it yields an `ok: false` response with code `parse_error` and a null id.
//!
//! Token accounting is request+response chars/4 per call, accumulated per
//! tool in a [`TokenLedger`].

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bundle::{
    build_context_bundle, estimate_tokens, rank_suspect_regions, BundleStrategy,
    DEFAULT_BUNDLE_BUDGET,
};
use crate::errors::{BundleError, SessionError};
use crate::graph::EdgeKind;
use crate::session::RetrievalSession;
use crate::slicer::{get_dataflow_slice, SliceDirection, DEFAULT_MAX_STEPS};

pub const TOOL_NAMES: [&str; 8] = [
    "search_entities",
    "traverse_relations",
    "get_enclosing_scopes",
    "get_code_span",
    "get_entity_info",
    "get_dataflow_slice",
    "build_context_bundle",
    "rank_suspect_regions",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolRequest {
    #[serde(default)]
    pub id: Value,
    pub tool: String,
    #[serde(default)]
    pub arguments: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolResponse {
    pub id: Value,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolErrorBody>,
}

impl ToolResponse {
    fn success(id: Value, result: Value) -> Self {
        ToolResponse {
            id,
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    fn failure(id: Value, code: &str, message: impl Into<String>) -> Self {
        ToolResponse {
            id,
            ok: false,
            result: None,
            error: Some(ToolErrorBody {
                code: code.to_string(),
                message: message.into(),
            }),
        }
    }
}

/// Cumulative estimated request+response tokens, per tool and total.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenLedger {
    pub per_tool: BTreeMap<String, u64>,
    pub total: u64,
}

impl TokenLedger {
    fn record(&mut self, tool: &str, tokens: u64) {
        *self.per_tool.entry(tool.to_string()).or_insert(0) += tokens;
        self.total += tokens;
    }
}

fn session_error_response(id: Value, err: SessionError) -> ToolResponse {
    let code = match &err {
        SessionError::UnknownNode { .. } => "unknown_node",
        SessionError::UnknownFile { .. } => "unknown_file",
        SessionError::InvalidSpan { .. } => "invalid_argument",
        SessionError::Io { .. } => "io_error",
    };
    ToolResponse::failure(id, code, err.to_string())
}

pub struct ToolService {
    session: RetrievalSession,
    ledger: Mutex<TokenLedger>,
}

impl ToolService {
    pub fn new(session: RetrievalSession) -> Self {
        ToolService {
            session,
            ledger: Mutex::new(TokenLedger::default()),
        }
    }

    pub fn session(&self) -> &RetrievalSession {
        &self.session
    }

    pub fn ledger(&self) -> TokenLedger {
        self.ledger.lock().expect("ledger poisoned").clone()
    }

    /// Handle one raw request line; never panics, never drops the
    /// connection. Returns the serialized response.
    pub fn handle_line(&self, line: &str) -> String {
        let (tool_key, response) = match serde_json::from_str::<ToolRequest>(line) {
            Ok(request) => {
                let tool_key = request.tool.clone();
                (tool_key, self.dispatch(request))
            }
            Err(err) => (
                "_parse_error".to_string(),
                ToolResponse::failure(Value::Null, "parse_error", err.to_string()),
            ),
        };
        let serialized = serde_json::to_string(&response).expect("response serializes");
        let tokens = estimate_tokens(line) + estimate_tokens(&serialized);
        self.ledger
            .lock()
            .expect("ledger poisoned")
            .record(&tool_key, tokens);
        serialized
    }

    /// Dispatch one parsed request to its tool.
    pub fn dispatch(&self, request: ToolRequest) -> ToolResponse {
        let id = request.id.clone();
        match request.tool.as_str() {
            "describe_tools" => ToolResponse::success(id, describe_tools()),
            "search_entities" => self.search_entities(id, request.arguments),
            "traverse_relations" => self.traverse_relations(id, request.arguments),
            "get_enclosing_scopes" => self.get_enclosing_scopes(id, request.arguments),
            "get_code_span" => self.get_code_span(id, request.arguments),
            "get_entity_info" => self.get_entity_info(id, request.arguments),
            "get_dataflow_slice" => self.get_dataflow_slice(id, request.arguments),
            "build_context_bundle" => self.build_context_bundle(id, request.arguments),
            "rank_suspect_regions" => self.rank_suspect_regions(id, request.arguments),
            other => ToolResponse::failure(id, "unknown_tool", format!("unknown tool `{other}`")),
        }
    }

    fn search_entities(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            query: String,
            k: usize,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        if args.k < 1 {
            return ToolResponse::failure(id, "invalid_argument", "k must be >= 1");
        }
        let hits = self.session.search_entities(&args.query, args.k);
        ToolResponse::success(id, json!({ "hits": hits }))
    }

    fn traverse_relations(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            seed: String,
            edge_kinds: Vec<String>,
            max_hops: u32,
            node_budget: usize,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        if args.max_hops < 1 || args.node_budget < 1 {
            return ToolResponse::failure(
                id,
                "invalid_argument",
                "max_hops and node_budget must be >= 1",
            );
        }
        let mut kinds = Vec::with_capacity(args.edge_kinds.len());
        for raw in &args.edge_kinds {
            match EdgeKind::parse(raw) {
                Some(kind) => kinds.push(kind),
                None => {
                    return ToolResponse::failure(
                        id,
                        "invalid_argument",
                        format!("unknown edge kind `{raw}`"),
                    )
                }
            }
        }
        match self
            .session
            .traverse_relations(&args.seed, &kinds, args.max_hops, args.node_budget)
        {
            Ok(report) => ToolResponse::success(id, json!(report)),
            Err(err) => session_error_response(id, err),
        }
    }

    fn get_enclosing_scopes(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            file: String,
            line: u32,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        match self.session.get_enclosing_scopes(&args.file, args.line) {
            Ok(record) => ToolResponse::success(id, json!(record)),
            Err(err) => session_error_response(id, err),
        }
    }

    fn get_code_span(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            file: String,
            start_line: u32,
            end_line: u32,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        match self
            .session
            .get_code_span(&args.file, args.start_line, args.end_line)
        {
            Ok(span) => ToolResponse::success(id, json!(span)),
            Err(err) => session_error_response(id, err),
        }
    }

    fn get_entity_info(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            id: String,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        match self.session.get_entity_info(&args.id) {
            Ok(info) => ToolResponse::success(id, json!(info)),
            Err(err) => session_error_response(id, err),
        }
    }

    fn get_dataflow_slice(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            file: String,
            line: u32,
            variable: String,
            direction: String,
            #[serde(default)]
            max_steps: Option<usize>,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        let Some(direction) = SliceDirection::parse(&args.direction) else {
            return ToolResponse::failure(
                id,
                "invalid_argument",
                "direction must be backward, forward, or both",
            );
        };
        let max_steps = args.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
        if max_steps < 1 {
            return ToolResponse::failure(id, "invalid_argument", "max_steps must be >= 1");
        }
        match get_dataflow_slice(
            &self.session,
            &args.file,
            args.line,
            &args.variable,
            direction,
            max_steps,
        ) {
            Ok(slice) => ToolResponse::success(id, json!(slice)),
            Err(err) => session_error_response(id, err),
        }
    }

    fn build_context_bundle(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            #[serde(default)]
            seed_ids: Vec<String>,
            #[serde(default)]
            slices: Vec<crate::slicer::DataflowSlice>,
            strategy: String,
            #[serde(default)]
            issue_text: String,
            #[serde(default)]
            budget_tokens: Option<u64>,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        let Some(strategy) = BundleStrategy::parse(&args.strategy) else {
            return ToolResponse::failure(
                id,
                "invalid_argument",
                "strategy must be structural_only, slices_only, or hybrid",
            );
        };
        match build_context_bundle(
            &self.session,
            &args.seed_ids,
            &args.slices,
            strategy,
            &args.issue_text,
            args.budget_tokens.unwrap_or(DEFAULT_BUNDLE_BUDGET),
        ) {
            Ok(bundle) => ToolResponse::success(id, json!(bundle)),
            Err(BundleError::EmptySeedSet { strategy }) => ToolResponse::failure(
                id,
                "empty_seed_set",
                format!("strategy `{strategy}` requires a non-empty seed set"),
            ),
            Err(BundleError::Session(err)) => session_error_response(id, err),
        }
    }

    fn rank_suspect_regions(&self, id: Value, arguments: Value) -> ToolResponse {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Args {
            issue_text: String,
            #[serde(default)]
            stack_trace: Option<String>,
        }
        let args: Args = match parse_args(arguments) {
            Ok(args) => args,
            Err(response) => return fail_args(id, response),
        };
        if args.issue_text.trim().is_empty() {
            return ToolResponse::failure(id, "invalid_argument", "issue_text must be non-empty");
        }
        let ranked =
            rank_suspect_regions(&self.session, &args.issue_text, args.stack_trace.as_deref());
        ToolResponse::success(id, json!({ "suspects": ranked }))
    }
}

fn parse_args<T: serde::de::DeserializeOwned>(arguments: Value) -> Result<T, String> {
    serde_json::from_value(arguments).map_err(|e| e.to_string())
}

fn fail_args(id: Value, message: String) -> ToolResponse {
    ToolResponse::failure(id, "invalid_argument", message)
}

/// JSON schema for every tool, plus describe_tools itself.
pub fn describe_tools() -> Value {
    fn schema(properties: Value, required: &[&str]) -> Value {
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
        })
    }
    let string = |desc: &str| json!({"type": "string", "description": desc});
    let integer = |desc: &str, minimum: i64| json!({"type": "integer", "description": desc, "minimum": minimum});

    let tools = json!([
        {
            "name": "search_entities",
            "description": "TF-IDF search over entity names, file paths, and docstring first paragraphs; returns up to k candidates with relevance scores.",
            "parameters": schema(json!({
                "query": string("free-text query"),
                "k": integer("maximum number of hits", 1),
            }), &["query", "k"]),
        },
        {
            "name": "traverse_relations",
            "description": "Breadth-first traversal from a seed node along the given edge kinds, bounded by a hop cap and a node budget.",
            "parameters": schema(json!({
                "seed": string("seed node id"),
                "edge_kinds": {"type": "array", "items": {"type": "string", "enum": ["Contains", "Imports", "ImportedBy", "Calls", "CalledBy", "Inherits", "DataflowDefUse", "DataflowUseDef"]}},
                "max_hops": integer("hop cap", 1),
                "node_budget": integer("maximum nodes visited, seed included", 1),
            }), &["seed", "edge_kinds", "max_hops", "node_budget"]),
        },
        {
            "name": "get_enclosing_scopes",
            "description": "Map a (file, line) pair to the innermost enclosing function, its class, and the module.",
            "parameters": schema(json!({
                "file": string("repo-relative file path"),
                "line": integer("1-based line number", 1),
            }), &["file", "line"]),
        },
        {
            "name": "get_code_span",
            "description": "Return raw source text for lines [start_line, end_line] of a file; the end is clamped to the file length.",
            "parameters": schema(json!({
                "file": string("repo-relative file path"),
                "start_line": integer("1-based inclusive start", 1),
                "end_line": integer("1-based inclusive end", 1),
            }), &["file", "start_line", "end_line"]),
        },
        {
            "name": "get_entity_info",
            "description": "Return the node payload and a per-edge-kind degree summary for a node id.",
            "parameters": schema(json!({
                "id": string("node id"),
            }), &["id"]),
        },
        {
            "name": "get_dataflow_slice",
            "description": "Trace how a variable flows through its enclosing function: backward to definitions, forward to uses, or both. Returns ordered slice steps; empty with a note when the seed has no statement-level dataflow.",
            "parameters": schema(json!({
                "file": string("repo-relative file path"),
                "line": integer("1-based seed line", 1),
                "variable": string("variable name at the seed"),
                "direction": {"type": "string", "enum": ["backward", "forward", "both"]},
                "max_steps": integer("visited-statement budget (default 50)", 1),
            }), &["file", "line", "variable", "direction"]),
        },
        {
            "name": "build_context_bundle",
            "description": "Assemble a ranked, token-budgeted set of code spans from seed entities and optional dataflow slices.",
            "parameters": schema(json!({
                "seed_ids": {"type": "array", "items": {"type": "string"}, "description": "seed entity ids"},
                "slices": {"type": "array", "description": "DataflowSlice objects from get_dataflow_slice"},
                "strategy": {"type": "string", "enum": ["structural_only", "slices_only", "hybrid"]},
                "issue_text": string("issue text used for relevance scoring"),
                "budget_tokens": integer("token budget (default 8000)", 0),
            }), &["strategy"]),
        },
        {
            "name": "rank_suspect_regions",
            "description": "Rank suspicious functions for an issue, seeded by stack-trace frames and entity search, expanded two hops over the call subgraph.",
            "parameters": schema(json!({
                "issue_text": string("issue text"),
                "stack_trace": string("optional interpreter traceback"),
            }), &["issue_text"]),
        },
        {
            "name": "describe_tools",
            "description": "Return the JSON schema of every tool.",
            "parameters": schema(json!({}), &[]),
        },
    ]);
    json!({ "tools": tools })
}

/// Newline-delimited JSON loop: one request per line, one response per line.
pub fn serve_lines(
    service: &ToolService,
    reader: impl BufRead,
    mut writer: impl Write,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = service.handle_line(&line);
        writer.write_all(response.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// One line of a trace file: a request, optionally with the expected
/// response for golden comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub request: ToolRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub request: ToolRequest,
    pub response: Value,
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub transcript: Vec<TranscriptEntry>,
    pub ledger: TokenLedger,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("malformed trace at line {line}: {detail}")]
    MalformedTrace { line: usize, detail: String },

    #[error("response mismatch for request id {id} at trace line {line}")]
    Mismatch {
        id: Value,
        line: usize,
        expected: String,
        actual: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Execute recorded requests in order, comparing against expected responses
/// byte-for-byte (canonical JSON) and failing fast on the first mismatch.
pub fn replay(service: &ToolService, reader: impl BufRead) -> Result<ReplayOutcome, ReplayError> {
    let mut transcript = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A trace line is either {request, expect?} or a bare ToolRequest.
        let entry: TraceEntry = match serde_json::from_str(&line) {
            Ok(entry) => entry,
            Err(wrapped_err) => match serde_json::from_str::<ToolRequest>(&line) {
                Ok(request) => TraceEntry {
                    request,
                    expect: None,
                },
                Err(_) => {
                    return Err(ReplayError::MalformedTrace {
                        line: line_no,
                        detail: wrapped_err.to_string(),
                    })
                }
            },
        };
        let request_line = serde_json::to_string(&entry.request).expect("request serializes");
        let response_line = service.handle_line(&request_line);
        let response: Value = serde_json::from_str(&response_line).expect("response parses");
        if let Some(expected) = &entry.expect {
            let expected_canonical = serde_json::to_string(expected).expect("expected serializes");
            let actual_canonical = serde_json::to_string(&response).expect("actual serializes");
            if expected_canonical != actual_canonical {
                return Err(ReplayError::Mismatch {
                    id: entry.request.id.clone(),
                    line: line_no,
                    expected: expected_canonical,
                    actual: actual_canonical,
                });
            }
        }
        transcript.push(TranscriptEntry {
            request: entry.request,
            response,
        });
    }
    Ok(ReplayOutcome {
        transcript,
        ledger: service.ledger(),
    })
}
