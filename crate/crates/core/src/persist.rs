//! Graph persistence: JSON Lines, one record per line.
//!
//! Layout: a `meta` record first, then `node` records sorted by id, then
//! `edge` records sorted by (src, dst, kind, variable). The sort makes two
//! builds of the same tree produce byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::errors::GraphError;
use crate::graph::{BuildMode, EntityNode, RepoGraph, TypedEdge};

pub const GRAPH_FORMAT: &str = "arise-graph/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "lowercase")]
enum Record {
    Meta {
        format: String,
        build_mode: BuildMode,
        nodes: u64,
        edges: u64,
    },
    Node(EntityNode),
    Edge(TypedEdge),
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(line: usize, detail: impl Into<String>) -> GraphError {
    GraphError::CorruptFile {
        line,
        detail: detail.into(),
    }
}

pub fn save_to_writer(graph: &RepoGraph, mut sink: impl Write) -> std::io::Result<()> {
    let meta = Record::Meta {
        format: GRAPH_FORMAT.to_string(),
        build_mode: graph.build_mode(),
        nodes: graph.node_count() as u64,
        edges: graph.edge_count() as u64,
    };
    writeln!(sink, "{}", serde_json::to_string(&meta)?)?;
    for node in graph.nodes() {
        writeln!(
            sink,
            "{}",
            serde_json::to_string(&Record::Node(node.clone()))?
        )?;
    }
    for edge in graph.edges() {
        writeln!(
            sink,
            "{}",
            serde_json::to_string(&Record::Edge(edge.clone()))?
        )?;
    }
    Ok(())
}

pub fn save_to_path(graph: &RepoGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    save_to_writer(graph, &mut writer).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn load_from_reader(source: impl BufRead) -> Result<RepoGraph, GraphError> {
    let mut meta: Option<(BuildMode, u64, u64)> = None;
    let mut nodes: BTreeMap<String, EntityNode> = BTreeMap::new();
    let mut edges: BTreeSet<TypedEdge> = BTreeSet::new();
    let mut edge_lines: Vec<(usize, TypedEdge)> = Vec::new();
    let mut line_no = 0usize;

    for line in source.lines() {
        line_no += 1;
        let line = line.map_err(|e| corrupt(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            return Err(corrupt(line_no, "blank line"));
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| corrupt(line_no, e.to_string()))?;
        match record {
            Record::Meta {
                format,
                build_mode,
                nodes,
                edges,
            } => {
                if line_no != 1 {
                    return Err(corrupt(line_no, "meta record must be the first line"));
                }
                if format != GRAPH_FORMAT {
                    return Err(corrupt(line_no, format!("unsupported format `{format}`")));
                }
                meta = Some((build_mode, nodes, edges));
            }
            Record::Node(node) => {
                if meta.is_none() {
                    return Err(corrupt(line_no, "record before meta header"));
                }
                node.validate()
                    .map_err(|e| corrupt(line_no, e.to_string()))?;
                if nodes.insert(node.id.clone(), node).is_some() {
                    return Err(corrupt(line_no, "duplicate node id"));
                }
            }
            Record::Edge(edge) => {
                if meta.is_none() {
                    return Err(corrupt(line_no, "record before meta header"));
                }
                edge_lines.push((line_no, edge));
            }
        }
    }

    let (build_mode, node_count, edge_count) =
        meta.ok_or_else(|| corrupt(1, "empty file, missing meta record"))?;
    for (line, edge) in edge_lines {
        if !nodes.contains_key(&edge.src) || !nodes.contains_key(&edge.dst) {
            return Err(corrupt(line, "edge references unknown node"));
        }
        if edge.kind.is_dataflow() == edge.variable.is_empty() {
            return Err(corrupt(line, "edge variable inconsistent with kind"));
        }
        edges.insert(edge);
    }
    if nodes.len() as u64 != node_count || edges.len() as u64 != edge_count {
        return Err(corrupt(
            line_no + 1,
            format!(
                "record counts do not match header (nodes {}/{}, edges {}/{})",
                nodes.len(),
                node_count,
                edges.len(),
                edge_count
            ),
        ));
    }
    Ok(RepoGraph::assemble(nodes, edges, build_mode))
}

pub fn load_from_path(path: impl AsRef<Path>) -> Result<RepoGraph, GraphError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    load_from_reader(BufReader::new(file))
}

/// Serialize to an in-memory byte buffer (used by determinism checks).
pub fn save_to_bytes(graph: &RepoGraph) -> Vec<u8> {
    let mut buffer = Vec::new();
    save_to_writer(graph, &mut buffer).expect("in-memory write cannot fail");
    buffer
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, GraphBuilder, NodeKind};

    fn sample_graph() -> RepoGraph {
        let mut builder = GraphBuilder::new(BuildMode::Full);
        let root = builder
            .upsert_node(EntityNode::new(NodeKind::Directory, ".", ".", ".", 0, 0))
            .unwrap();
        let module = builder
            .upsert_node(EntityNode::new(
                NodeKind::Module,
                "util",
                "pkg.util",
                "pkg/util.py",
                1,
                3,
            ))
            .unwrap();
        builder
            .connect(&root, &module, EdgeKind::Contains, None)
            .unwrap();
        builder.freeze()
    }

    #[test]
    fn round_trip_preserves_structure() {
        let graph = sample_graph();
        let bytes = save_to_bytes(&graph);
        let reloaded = load_from_reader(bytes.as_slice()).unwrap();
        assert_eq!(graph, reloaded);
    }

    #[test]
    fn single_root_graph_round_trips() {
        let mut builder = GraphBuilder::new(BuildMode::Full);
        builder
            .upsert_node(EntityNode::new(NodeKind::Directory, ".", ".", ".", 0, 0))
            .unwrap();
        let graph = builder.freeze();
        let reloaded = load_from_reader(save_to_bytes(&graph).as_slice()).unwrap();
        assert_eq!(graph, reloaded);
    }

    #[test]
    fn truncated_file_reports_corrupt_line() {
        let graph = sample_graph();
        let bytes = save_to_bytes(&graph);
        let cut = &bytes[..bytes.len() - 10];
        let err = load_from_reader(cut).unwrap_err();
        match err {
            GraphError::CorruptFile { line, .. } => assert!(line >= 3),
            other => panic!("expected CorruptFile, got {other:?}"),
        }
    }

    #[test]
    fn whole_line_truncation_is_detected_by_counts() {
        let graph = sample_graph();
        let text = String::from_utf8(save_to_bytes(&graph)).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        let shorter = format!("{}\n", lines.join("\n"));
        let err = load_from_reader(shorter.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::CorruptFile { .. }));
    }

    #[test]
    fn save_is_deterministic() {
        let a = save_to_bytes(&sample_graph());
        let b = save_to_bytes(&sample_graph());
        assert_eq!(a, b);
    }
}
