//! Typed property-graph storage for the repository graph.
//!
//! Nodes are code entities (directories down to single statements), edges are
//! the eight typed relations. Mutation happens through [`GraphBuilder`] during
//! the build phase; [`GraphBuilder::freeze`] produces an immutable
//! [`RepoGraph`] that is safe to share across concurrent readers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::errors::GraphError;

/// Entity kind carried by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Directory,
    Module,
    Class,
    Function,
    Method,
    Statement,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Directory => "Directory",
            NodeKind::Module => "Module",
            NodeKind::Class => "Class",
            NodeKind::Function => "Function",
            NodeKind::Method => "Method",
            NodeKind::Statement => "Statement",
        }
    }

    /// Kinds that own executable bodies (targets for call edges and slicing).
    pub fn is_callable(&self) -> bool {
        matches!(self, NodeKind::Function | NodeKind::Method)
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relation kind carried by every edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Contains,
    Imports,
    ImportedBy,
    Calls,
    CalledBy,
    Inherits,
    DataflowDefUse,
    DataflowUseDef,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 8] = [
        EdgeKind::Contains,
        EdgeKind::Imports,
        EdgeKind::ImportedBy,
        EdgeKind::Calls,
        EdgeKind::CalledBy,
        EdgeKind::Inherits,
        EdgeKind::DataflowDefUse,
        EdgeKind::DataflowUseDef,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Contains => "Contains",
            EdgeKind::Imports => "Imports",
            EdgeKind::ImportedBy => "ImportedBy",
            EdgeKind::Calls => "Calls",
            EdgeKind::CalledBy => "CalledBy",
            EdgeKind::Inherits => "Inherits",
            EdgeKind::DataflowDefUse => "DataflowDefUse",
            EdgeKind::DataflowUseDef => "DataflowUseDef",
        }
    }

    /// The paired reverse kind, for kinds stored in both directions.
    pub fn mirror(&self) -> Option<EdgeKind> {
        match self {
            EdgeKind::Imports => Some(EdgeKind::ImportedBy),
            EdgeKind::ImportedBy => Some(EdgeKind::Imports),
            EdgeKind::Calls => Some(EdgeKind::CalledBy),
            EdgeKind::CalledBy => Some(EdgeKind::Calls),
            EdgeKind::DataflowDefUse => Some(EdgeKind::DataflowUseDef),
            EdgeKind::DataflowUseDef => Some(EdgeKind::DataflowDefUse),
            EdgeKind::Contains | EdgeKind::Inherits => None,
        }
    }

    pub fn is_dataflow(&self) -> bool {
        matches!(self, EdgeKind::DataflowDefUse | EdgeKind::DataflowUseDef)
    }

    pub fn parse(s: &str) -> Option<EdgeKind> {
        EdgeKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether statement nodes and dataflow edges are materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BuildMode {
    #[default]
    Full,
    /// Structure only: no Statement nodes, no dataflow edges.
    Coarse,
}

impl std::fmt::Display for BuildMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BuildMode::Full => "full",
            BuildMode::Coarse => "coarse",
        })
    }
}

/// How a variable is bound at a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefRole {
    Parameter,
    Definition,
    Augmented,
    LoopTarget,
    WithTarget,
}

/// One variable binding recorded on a Statement node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarDef {
    pub name: String,
    pub role: DefRole,
}

/// One graph vertex with source coordinates.
///
/// `defs`/`uses` are populated on Statement nodes only; they record the
/// variable events the dataflow pass derived for that statement, so that
/// slicing over a reloaded graph can label roles and validate seeds without
/// re-parsing source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityNode {
    pub id: String,
    pub kind: NodeKind,
    pub name: String,
    pub qualified_name: String,
    pub file_path: String,
    pub start_line: u32,
    pub end_line: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub doc_head: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defs: Vec<VarDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uses: Vec<String>,
}

impl EntityNode {
    /// Deterministic node id: `kind:qualified_name:start_line`.
    pub fn node_id(kind: NodeKind, qualified_name: &str, start_line: u32) -> String {
        format!("{}:{}:{}", kind.as_str(), qualified_name, start_line)
    }

    pub fn new(
        kind: NodeKind,
        name: impl Into<String>,
        qualified_name: impl Into<String>,
        file_path: impl Into<String>,
        start_line: u32,
        end_line: u32,
    ) -> Self {
        let qualified_name = qualified_name.into();
        EntityNode {
            id: Self::node_id(kind, &qualified_name, start_line),
            kind,
            name: name.into(),
            qualified_name,
            file_path: file_path.into(),
            start_line,
            end_line,
            doc_head: String::new(),
            defs: Vec::new(),
            uses: Vec::new(),
        }
    }

    pub fn with_doc_head(mut self, doc_head: impl Into<String>) -> Self {
        self.doc_head = doc_head.into();
        self
    }

    /// Does this statement define `name`, and in what role?
    pub fn def_role_of(&self, name: &str) -> Option<DefRole> {
        self.defs.iter().find(|d| d.name == name).map(|d| d.role)
    }

    pub fn references(&self, name: &str) -> bool {
        self.def_role_of(name).is_some() || self.uses.iter().any(|u| u == name)
    }

    pub(crate) fn validate(&self) -> Result<(), GraphError> {
        let fail = |detail: &str| {
            Err(GraphError::InvalidNode {
                id: self.id.clone(),
                detail: detail.to_string(),
            })
        };
        if self.id != Self::node_id(self.kind, &self.qualified_name, self.start_line) {
            return fail("id is not kind:qualified_name:start_line");
        }
        match self.kind {
            NodeKind::Directory => {
                if self.start_line != 0 || self.end_line != 0 {
                    return fail("Directory nodes carry the 0/0 line sentinel");
                }
                if self.file_path.is_empty() {
                    return fail("Directory nodes carry their own path");
                }
            }
            _ => {
                if self.start_line == 0 || self.start_line > self.end_line {
                    return fail("requires 1 <= start_line <= end_line");
                }
            }
        }
        Ok(())
    }
}

/// One directed edge. `variable` is non-empty iff the kind is a dataflow kind.
///
/// The derived ordering (src, dst, kind, variable) is the canonical edge sort
/// used by persistence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedEdge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub variable: String,
}

/// Out-neighbor entry: target node plus the dataflow variable, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbor {
    pub node: String,
    pub variable: String,
}

type AdjacencyMap = HashMap<String, BTreeMap<EdgeKind, Vec<Neighbor>>>;

/// Mutable graph under construction. Single logical writer.
#[derive(Debug)]
pub struct GraphBuilder {
    build_mode: BuildMode,
    nodes: BTreeMap<String, EntityNode>,
    edges: BTreeSet<TypedEdge>,
}

impl GraphBuilder {
    pub fn new(build_mode: BuildMode) -> Self {
        GraphBuilder {
            build_mode,
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
        }
    }

    pub fn build_mode(&self) -> BuildMode {
        self.build_mode
    }

    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.nodes.get(id)
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values()
    }

    /// Insert a node, idempotent on identical id + payload.
    pub fn upsert_node(&mut self, node: EntityNode) -> Result<String, GraphError> {
        node.validate()?;
        if let Some(existing) = self.nodes.get(&node.id) {
            if *existing != node {
                return Err(GraphError::IdCollision { id: node.id });
            }
            return Ok(node.id);
        }
        let id = node.id.clone();
        self.nodes.insert(id.clone(), node);
        Ok(id)
    }

    /// Store an edge and, for mirrored kinds, its reverse atomically.
    ///
    /// Returns the number of directed edges the connection is stored as
    /// (2 for mirrored kinds, 1 for Contains/Inherits). Re-connecting an
    /// existing pair is a no-op with the same return value.
    pub fn connect(
        &mut self,
        src: &str,
        dst: &str,
        kind: EdgeKind,
        variable: Option<&str>,
    ) -> Result<usize, GraphError> {
        if !self.nodes.contains_key(src) {
            return Err(GraphError::UnknownNode {
                id: src.to_string(),
            });
        }
        if !self.nodes.contains_key(dst) {
            return Err(GraphError::UnknownNode {
                id: dst.to_string(),
            });
        }
        let variable = variable.unwrap_or("");
        if kind.is_dataflow() {
            if variable.is_empty() {
                return Err(GraphError::MissingDataflowVariable);
            }
            for id in [src, dst] {
                if self.nodes[id].kind != NodeKind::Statement {
                    return Err(GraphError::NonStatementDataflowEndpoint { id: id.to_string() });
                }
            }
        } else if !variable.is_empty() {
            return Err(GraphError::VariableOnNonDataflowEdge {
                kind: kind.to_string(),
            });
        }
        self.edges.insert(TypedEdge {
            src: src.to_string(),
            dst: dst.to_string(),
            kind,
            variable: variable.to_string(),
        });
        match kind.mirror() {
            Some(reverse) => {
                self.edges.insert(TypedEdge {
                    src: dst.to_string(),
                    dst: src.to_string(),
                    kind: reverse,
                    variable: variable.to_string(),
                });
                Ok(2)
            }
            None => Ok(1),
        }
    }

    /// Seal the graph for concurrent read access.
    pub fn freeze(self) -> RepoGraph {
        RepoGraph::assemble(self.nodes, self.edges, self.build_mode)
    }
}

/// Immutable repository graph with per-node, per-kind adjacency.
#[derive(Debug)]
pub struct RepoGraph {
    nodes: BTreeMap<String, EntityNode>,
    edges: BTreeSet<TypedEdge>,
    out: AdjacencyMap,
    inbound: AdjacencyMap,
    build_mode: BuildMode,
}

impl PartialEq for RepoGraph {
    fn eq(&self, other: &Self) -> bool {
        self.build_mode == other.build_mode
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl RepoGraph {
    pub(crate) fn assemble(
        nodes: BTreeMap<String, EntityNode>,
        edges: BTreeSet<TypedEdge>,
        build_mode: BuildMode,
    ) -> Self {
        let mut out: AdjacencyMap = HashMap::new();
        let mut inbound: AdjacencyMap = HashMap::new();
        for edge in &edges {
            out.entry(edge.src.clone())
                .or_default()
                .entry(edge.kind)
                .or_default()
                .push(Neighbor {
                    node: edge.dst.clone(),
                    variable: edge.variable.clone(),
                });
            inbound
                .entry(edge.dst.clone())
                .or_default()
                .entry(edge.kind)
                .or_default()
                .push(Neighbor {
                    node: edge.src.clone(),
                    variable: edge.variable.clone(),
                });
        }
        // BTreeSet iteration is already sorted by (src, dst, kind, variable),
        // so `out` lists are sorted by (dst, variable); sort inbound likewise.
        for lists in inbound.values_mut() {
            for list in lists.values_mut() {
                list.sort_by(|a, b| (&a.node, &a.variable).cmp(&(&b.node, &b.variable)));
            }
        }
        RepoGraph {
            nodes,
            edges,
            out,
            inbound,
            build_mode,
        }
    }

    pub fn build_mode(&self) -> BuildMode {
        self.build_mode
    }

    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.values().filter(|n| n.kind == kind).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = &TypedEdge> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, src: &str, dst: &str, kind: EdgeKind, variable: &str) -> bool {
        self.edges.contains(&TypedEdge {
            src: src.to_string(),
            dst: dst.to_string(),
            kind,
            variable: variable.to_string(),
        })
    }

    /// Out-neighbors of `id` along `kind`, sorted by (node, variable).
    pub fn neighbors(&self, id: &str, kind: EdgeKind) -> &[Neighbor] {
        self.out
            .get(id)
            .and_then(|m| m.get(&kind))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn in_neighbors(&self, id: &str, kind: EdgeKind) -> &[Neighbor] {
        self.inbound
            .get(id)
            .and_then(|m| m.get(&kind))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// The unique Contains parent, if any.
    pub fn parent(&self, id: &str) -> Option<&EntityNode> {
        self.in_neighbors(id, EdgeKind::Contains)
            .first()
            .and_then(|n| self.nodes.get(&n.node))
    }

    /// Per-kind (in, out) degree counts, omitting kinds with no incident edges.
    pub fn degrees(&self, id: &str) -> BTreeMap<EdgeKind, (usize, usize)> {
        let mut result = BTreeMap::new();
        for kind in EdgeKind::ALL {
            let inbound = self.in_neighbors(id, kind).len();
            let outbound = self.neighbors(id, kind).len();
            if inbound + outbound > 0 {
                result.insert(kind, (inbound, outbound));
            }
        }
        result
    }
}
