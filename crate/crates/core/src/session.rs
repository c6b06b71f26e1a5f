//! Retrieval session: the persistent object every tool call shares.
//!
//! Holds the frozen graph, the TF-IDF entity index, the per-file
//! enclosing-scope interval tables, a lazy source cache, and the slice
//! registry accumulated by slicing calls in this session. Everything except
//! the registry is immutable after open, so the session is safe for
//! concurrent tool calls.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::errors::SessionError;
use crate::graph::{EdgeKind, EntityNode, NodeKind, RepoGraph};
use crate::tfidf::{SparseVector, TfIdfIndex};

/// Which indexed field a search hit matched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedField {
    Name,
    Path,
    Doc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchHit {
    pub entity: String,
    pub score: f64,
    pub field: MatchedField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraversalNode {
    pub id: String,
    pub hop: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraversalReport {
    pub nodes: Vec<TraversalNode>,
    pub truncated: bool,
}

/// Innermost function/class plus the module for a (file, line) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScopeRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub module: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeSpan {
    pub text: String,
    pub clamped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityInfo {
    pub node: EntityNode,
    /// Per-kind in/out degree counts; kinds without incident edges omitted.
    pub degrees: Vec<DegreeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeEntry {
    pub kind: EdgeKind,
    pub inbound: usize,
    pub outbound: usize,
}

/// One registered slice span: (file, start_line, end_line).
pub type RegistrySpan = (String, u32, u32);

#[derive(Debug, Clone)]
struct SpanEntry {
    start: u32,
    end: u32,
    id: String,
}

#[derive(Debug, Clone)]
struct StatementEntry {
    start: u32,
    end: u32,
    id: String,
    function_len: u32,
}

#[derive(Debug, Default)]
struct FileScopes {
    module: String,
    functions: Vec<SpanEntry>,
    classes: Vec<SpanEntry>,
    statements: Vec<StatementEntry>,
}

/// Term sets per indexed entity, used only for the matched-field tag.
struct FieldTerms {
    name: BTreeSet<String>,
    path: BTreeSet<String>,
    doc: BTreeSet<String>,
}

pub struct RetrievalSession {
    graph: Arc<RepoGraph>,
    repo_root: PathBuf,
    index: TfIdfIndex,
    doc_entities: Vec<String>,
    entity_docs: HashMap<String, usize>,
    fields: Vec<FieldTerms>,
    scopes: HashMap<String, FileScopes>,
    sources: Mutex<HashMap<String, Arc<Vec<String>>>>,
    registry: Mutex<BTreeSet<RegistrySpan>>,
}

impl RetrievalSession {
    /// Build the shared indexes once. `repo_root` is where source files are
    /// read from for `get_code_span` and token costing.
    pub fn open(graph: Arc<RepoGraph>, repo_root: impl Into<PathBuf>) -> Self {
        let mut documents = Vec::new();
        let mut doc_entities = Vec::new();
        let mut entity_docs = HashMap::new();
        let mut fields = Vec::new();
        for node in graph.nodes() {
            if node.kind == NodeKind::Statement {
                continue;
            }
            let text = format!(
                "{} {} {}",
                node.name,
                node.qualified_name.replace('.', " "),
                node.doc_head
            );
            entity_docs.insert(node.id.clone(), documents.len());
            doc_entities.push(node.id.clone());
            fields.push(FieldTerms {
                name: crate::tfidf::tokenize(&node.name).into_iter().collect(),
                path: crate::tfidf::tokenize(&node.qualified_name)
                    .into_iter()
                    .collect(),
                doc: crate::tfidf::tokenize(&node.doc_head).into_iter().collect(),
            });
            documents.push(text);
        }
        let index = TfIdfIndex::build(&documents);
        let scopes = build_scope_index(&graph);
        RetrievalSession {
            graph,
            repo_root: repo_root.into(),
            index,
            doc_entities,
            entity_docs,
            fields,
            scopes,
            sources: Mutex::new(HashMap::new()),
            registry: Mutex::new(BTreeSet::new()),
        }
    }

    pub fn graph(&self) -> &RepoGraph {
        &self.graph
    }

    pub fn indexed_entity_count(&self) -> usize {
        self.doc_entities.len()
    }

    /// TF-IDF search over entity names, paths, and docstring heads.
    /// Zero-score entities are never returned.
    pub fn search_entities(&self, query: &str, k: usize) -> Vec<SearchHit> {
        let query_vector = self.index.vectorize(query);
        if query_vector.is_zero() {
            return Vec::new();
        }
        let query_terms: BTreeSet<String> = crate::tfidf::tokenize(query).into_iter().collect();
        let mut hits: Vec<SearchHit> = Vec::new();
        for (position, entity) in self.doc_entities.iter().enumerate() {
            let score = self.index.similarity(&query_vector, position);
            if score > 0.0 {
                hits.push(SearchHit {
                    entity: entity.clone(),
                    score,
                    field: self.matched_field(position, &query_terms),
                });
            }
        }
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.entity.cmp(&b.entity))
        });
        hits.truncate(k);
        hits
    }

    fn matched_field(&self, position: usize, query_terms: &BTreeSet<String>) -> MatchedField {
        let terms = &self.fields[position];
        if query_terms.iter().any(|t| terms.name.contains(t)) {
            MatchedField::Name
        } else if query_terms.iter().any(|t| terms.path.contains(t)) {
            MatchedField::Path
        } else if query_terms.iter().any(|t| terms.doc.contains(t)) {
            MatchedField::Doc
        } else {
            // Camel fragments can overlap without a whole-term match.
            MatchedField::Path
        }
    }

    /// Relevance of one entity to free text (the Eq-style `rel` component).
    pub fn relevance(&self, query: &SparseVector, entity: &str) -> f64 {
        match self.entity_docs.get(entity) {
            Some(&position) => self.index.similarity(query, position),
            None => 0.0,
        }
    }

    pub fn query_vector(&self, text: &str) -> SparseVector {
        self.index.vectorize(text)
    }

    /// Breadth-first traversal from `seed` along `kinds` only.
    ///
    /// Visits each node once, layer by layer with each layer sorted by node
    /// id. Stops at the hop cap or the node budget, whichever comes first;
    /// `truncated` is set when reachable nodes were left unvisited.
    pub fn traverse_relations(
        &self,
        seed: &str,
        kinds: &[EdgeKind],
        max_hops: u32,
        node_budget: usize,
    ) -> Result<TraversalReport, SessionError> {
        if self.graph.node(seed).is_none() {
            return Err(SessionError::UnknownNode {
                id: seed.to_string(),
            });
        }
        let mut visited: BTreeSet<&str> = BTreeSet::new();
        let mut nodes = Vec::new();
        let mut truncated = false;
        visited.insert(seed);
        nodes.push(TraversalNode {
            id: seed.to_string(),
            hop: 0,
        });
        let mut current: Vec<&str> = vec![seed];
        let mut hop = 0u32;

        'outer: while !current.is_empty() {
            let mut frontier: BTreeSet<&str> = BTreeSet::new();
            for id in &current {
                for kind in kinds {
                    for neighbor in self.graph.neighbors(id, *kind) {
                        if !visited.contains(neighbor.node.as_str()) {
                            frontier.insert(&neighbor.node);
                        }
                    }
                }
            }
            if frontier.is_empty() {
                break;
            }
            if hop == max_hops {
                truncated = true;
                break;
            }
            hop += 1;
            let mut next: Vec<&str> = Vec::with_capacity(frontier.len());
            for id in frontier {
                if nodes.len() >= node_budget {
                    truncated = true;
                    break 'outer;
                }
                visited.insert(id);
                nodes.push(TraversalNode {
                    id: id.to_string(),
                    hop,
                });
                next.push(id);
            }
            current = next;
        }
        Ok(TraversalReport { nodes, truncated })
    }

    /// Innermost enclosing function/method, class, and module for a line.
    /// A line outside every entity still resolves to the module.
    pub fn get_enclosing_scopes(&self, file: &str, line: u32) -> Result<ScopeRecord, SessionError> {
        let scopes = self
            .scopes
            .get(file)
            .ok_or_else(|| SessionError::UnknownFile {
                path: file.to_string(),
            })?;
        Ok(ScopeRecord {
            function: innermost(&scopes.functions, line),
            class: innermost(&scopes.classes, line),
            module: scopes.module.clone(),
        })
    }

    /// Raw source lines [start, end], newline-joined; the end is clamped to
    /// the file length.
    pub fn get_code_span(
        &self,
        file: &str,
        start: u32,
        end: u32,
    ) -> Result<CodeSpan, SessionError> {
        if start == 0 || start > end {
            return Err(SessionError::InvalidSpan { start, end });
        }
        if !self.scopes.contains_key(file) {
            return Err(SessionError::UnknownFile {
                path: file.to_string(),
            });
        }
        let lines = self.file_lines(file)?;
        let total = lines.len() as u32;
        if start > total {
            return Ok(CodeSpan {
                text: String::new(),
                clamped: true,
            });
        }
        let clamped_end = end.min(total);
        let text = lines[(start - 1) as usize..clamped_end as usize].join("\n");
        Ok(CodeSpan {
            text,
            clamped: clamped_end != end,
        })
    }

    /// Node payload plus per-edge-kind degree counts.
    pub fn get_entity_info(&self, id: &str) -> Result<EntityInfo, SessionError> {
        let node = self
            .graph
            .node(id)
            .ok_or_else(|| SessionError::UnknownNode { id: id.to_string() })?;
        let degrees = self
            .graph
            .degrees(id)
            .into_iter()
            .map(|(kind, (inbound, outbound))| DegreeEntry {
                kind,
                inbound,
                outbound,
            })
            .collect();
        Ok(EntityInfo {
            node: node.clone(),
            degrees,
        })
    }

    pub fn is_known_file(&self, file: &str) -> bool {
        self.scopes.contains_key(file)
    }

    pub fn known_files(&self) -> impl Iterator<Item = &str> {
        self.scopes.keys().map(String::as_str)
    }

    /// The Statement node covering `line`, innermost function first.
    pub fn statement_at(&self, file: &str, line: u32) -> Option<&EntityNode> {
        let scopes = self.scopes.get(file)?;
        scopes
            .statements
            .iter()
            .filter(|s| s.start <= line && line <= s.end)
            .min_by(|a, b| {
                a.function_len
                    .cmp(&b.function_len)
                    .then_with(|| a.id.cmp(&b.id))
            })
            .and_then(|s| self.graph.node(&s.id))
    }

    /// The function that owns a statement node.
    pub fn statement_function(&self, statement_id: &str) -> Option<&EntityNode> {
        self.graph.parent(statement_id)
    }

    pub(crate) fn file_lines(&self, file: &str) -> Result<Arc<Vec<String>>, SessionError> {
        let mut cache = self.sources.lock().expect("source cache poisoned");
        if let Some(lines) = cache.get(file) {
            return Ok(lines.clone());
        }
        let path = self.repo_root.join(file);
        let text = std::fs::read_to_string(&path).map_err(|e| SessionError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let lines: Arc<Vec<String>> = Arc::new(text.lines().map(str::to_string).collect());
        cache.insert(file.to_string(), lines.clone());
        Ok(lines)
    }

    /// Append spans produced by a slice call; insertion is atomic.
    pub fn record_slice_spans(&self, spans: impl IntoIterator<Item = RegistrySpan>) {
        let mut registry = self.registry.lock().expect("registry poisoned");
        registry.extend(spans);
    }

    pub fn registry_snapshot(&self) -> Vec<RegistrySpan> {
        self.registry
            .lock()
            .expect("registry poisoned")
            .iter()
            .cloned()
            .collect()
    }

    pub fn span_in_registry(&self, file: &str, start: u32, end: u32) -> bool {
        let registry = self.registry.lock().expect("registry poisoned");
        registry
            .iter()
            .any(|(f, s, e)| f == file && *s <= end && start <= *e)
    }
}

fn innermost(entries: &[SpanEntry], line: u32) -> Option<String> {
    entries
        .iter()
        .filter(|e| e.start <= line && line <= e.end)
        .min_by(|a, b| {
            (a.end - a.start)
                .cmp(&(b.end - b.start))
                .then_with(|| a.id.cmp(&b.id))
        })
        .map(|e| e.id.clone())
}

fn build_scope_index(graph: &RepoGraph) -> HashMap<String, FileScopes> {
    let mut scopes: HashMap<String, FileScopes> = HashMap::new();
    for node in graph.nodes() {
        if node.kind == NodeKind::Module {
            scopes.entry(node.file_path.clone()).or_default().module = node.id.clone();
        }
    }
    for node in graph.nodes() {
        let entry = match scopes.get_mut(&node.file_path) {
            Some(entry) => entry,
            None => continue,
        };
        match node.kind {
            NodeKind::Function | NodeKind::Method => entry.functions.push(SpanEntry {
                start: node.start_line,
                end: node.end_line,
                id: node.id.clone(),
            }),
            NodeKind::Class => entry.classes.push(SpanEntry {
                start: node.start_line,
                end: node.end_line,
                id: node.id.clone(),
            }),
            NodeKind::Statement => {
                let function = graph.parent(&node.id);
                if let Some(function) = function {
                    entry.statements.push(StatementEntry {
                        start: node.start_line,
                        end: node.end_line,
                        id: node.id.clone(),
                        function_len: function.end_line - function.start_line,
                    });
                }
            }
            _ => {}
        }
    }
    scopes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build::build_graph;
    use crate::graph::BuildMode;
    use std::path::PathBuf;

    fn f1_root() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/f1")
    }

    fn f1_session() -> RetrievalSession {
        let graph = build_graph(f1_root(), BuildMode::Full).unwrap().graph;
        RetrievalSession::open(Arc::new(graph), f1_root())
    }

    #[test]
    fn session_indexes_all_non_statement_entities() {
        let session = f1_session();
        assert_eq!(session.indexed_entity_count(), 7);
    }

    #[test]
    fn search_finds_inc_first() {
        let session = f1_session();
        let hits = session.search_entities("inc", 3);
        assert!(!hits.is_empty());
        assert_eq!(hits[0].entity, "Function:pkg.util.inc:1");
        assert_eq!(hits[0].field, MatchedField::Name);
        assert!(hits[0].score > 0.0 && hits[0].score <= 1.0);
    }

    #[test]
    fn search_with_no_overlap_is_empty() {
        let session = f1_session();
        assert!(session.search_entities("zzzzz qqqq", 5).is_empty());
    }

    #[test]
    fn empty_repository_session_never_matches() {
        let dir = tempfile::tempdir().unwrap();
        let graph = build_graph(dir.path(), BuildMode::Full).unwrap().graph;
        let session = RetrievalSession::open(Arc::new(graph), dir.path());
        for query in ["anything", "pkg util inc", ""] {
            assert!(session.search_entities(query, 10).is_empty());
        }
    }

    #[test]
    fn search_is_deterministic_across_sessions() {
        let a = f1_session().search_entities("pkg util", 10);
        let b = f1_session().search_entities("pkg util", 10);
        let pairs = |hits: &[SearchHit]| {
            hits.iter()
                .map(|h| (h.entity.clone(), h.score))
                .collect::<Vec<_>>()
        };
        assert_eq!(pairs(&a), pairs(&b));
    }

    #[test]
    fn traverse_calls_from_run_reaches_inc() {
        let session = f1_session();
        let report = session
            .traverse_relations("Function:pkg.main.run:3", &[EdgeKind::Calls], 2, 50)
            .unwrap();
        let hops: Vec<(&str, u32)> = report
            .nodes
            .iter()
            .map(|n| (n.id.as_str(), n.hop))
            .collect();
        assert_eq!(
            hops,
            vec![
                ("Function:pkg.main.run:3", 0),
                ("Function:pkg.util.inc:1", 1)
            ]
        );
        assert!(!report.truncated);
    }

    #[test]
    fn traverse_respects_node_budget() {
        let session = f1_session();
        let report = session
            .traverse_relations("Function:pkg.main.run:3", &[EdgeKind::Calls], 2, 1)
            .unwrap();
        assert_eq!(report.nodes.len(), 1);
        assert!(report.truncated);
    }

    #[test]
    fn traverse_with_absent_kind_stays_at_seed() {
        let session = f1_session();
        let report = session
            .traverse_relations("Function:pkg.main.run:3", &[EdgeKind::Inherits], 3, 10)
            .unwrap();
        assert_eq!(report.nodes.len(), 1);
        assert!(!report.truncated);
    }

    #[test]
    fn traverse_unknown_seed_errors() {
        let session = f1_session();
        assert!(matches!(
            session.traverse_relations("Function:ghost:1", &[EdgeKind::Calls], 1, 1),
            Err(SessionError::UnknownNode { .. })
        ));
    }

    #[test]
    fn enclosing_scopes_inside_run() {
        let session = f1_session();
        let record = session.get_enclosing_scopes("pkg/main.py", 5).unwrap();
        assert_eq!(record.function.as_deref(), Some("Function:pkg.main.run:3"));
        assert_eq!(record.class, None);
        assert_eq!(record.module, "Module:pkg.main:1");
    }

    #[test]
    fn enclosing_scopes_on_import_line_is_module_only() {
        let session = f1_session();
        let record = session.get_enclosing_scopes("pkg/main.py", 1).unwrap();
        assert_eq!(record.function, None);
        assert_eq!(record.module, "Module:pkg.main:1");
    }

    #[test]
    fn enclosing_scopes_unknown_file_errors() {
        let session = f1_session();
        assert!(matches!(
            session.get_enclosing_scopes("ghost.py", 3),
            Err(SessionError::UnknownFile { .. })
        ));
    }

    #[test]
    fn code_span_returns_exact_lines() {
        let session = f1_session();
        let span = session.get_code_span("pkg/util.py", 2, 2).unwrap();
        assert_eq!(span.text, "    b = a + 1");
        assert!(!span.clamped);
    }

    #[test]
    fn code_span_clamps_past_eof() {
        let session = f1_session();
        let span = session.get_code_span("pkg/util.py", 2, 99).unwrap();
        assert!(span.clamped);
        assert_eq!(span.text.lines().count(), 2);
        let empty = session.get_code_span("pkg/util.py", 50, 60).unwrap();
        assert!(empty.clamped);
        assert!(empty.text.is_empty());
    }

    #[test]
    fn entity_info_degrees_for_inc() {
        let session = f1_session();
        let info = session.get_entity_info("Function:pkg.util.inc:1").unwrap();
        let degree = |kind: EdgeKind| {
            info.degrees
                .iter()
                .find(|d| d.kind == kind)
                .map(|d| (d.inbound, d.outbound))
                .unwrap_or((0, 0))
        };
        assert_eq!(degree(EdgeKind::Calls), (1, 0));
        assert_eq!(degree(EdgeKind::Contains), (1, 3));
        assert!(matches!(
            session.get_entity_info("Function:ghost:9"),
            Err(SessionError::UnknownNode { .. })
        ));
    }

    #[test]
    fn statement_lookup_prefers_innermost_function() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("m.py"),
            "def outer():\n    if True:\n        def inner():\n            z = 1\n            return z\n    return 0\n",
        )
        .unwrap();
        let graph = build_graph(dir.path(), BuildMode::Full).unwrap().graph;
        let session = RetrievalSession::open(Arc::new(graph), dir.path());
        let statement = session.statement_at("m.py", 4).unwrap();
        assert_eq!(statement.qualified_name, "m.outer.inner.s1");
    }

    #[test]
    fn registry_overlap_checks_file_and_lines() {
        let session = f1_session();
        assert!(!session.span_in_registry("pkg/main.py", 3, 6));
        session.record_slice_spans(vec![("pkg/main.py".to_string(), 4, 4)]);
        assert!(session.span_in_registry("pkg/main.py", 3, 6));
        assert!(!session.span_in_registry("pkg/util.py", 1, 3));
        assert_eq!(session.registry_snapshot().len(), 1);
    }
}
