use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GraphEdge, GraphNode, KgError, KnowledgeGraph, RelationVocabulary};
use crate::jsonl::{read_lines, write_lines};

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";
pub const SCRIPT_FILE: &str = "graph.cypher";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    /// `nodes.jsonl` + `edges.jsonl`; re-importable.
    NodesEdgesJsonl,
    /// `graph.cypher`: one MERGE statement per node, then per edge.
    GraphScript,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" | "nodes_edges_jsonl" => Ok(Self::NodesEdgesJsonl),
            "cypher" | "graph_script" => Ok(Self::GraphScript),
            other => Err(format!("unknown export format {other:?} (expected jsonl or cypher)")),
        }
    }
}

/// Writes the graph into `dir` and returns the files written.
pub fn export_graph(graph: &KnowledgeGraph, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>, KgError> {
    if graph.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    fs::create_dir_all(dir).map_err(KgError::store(dir))?;
    match format {
        ExportFormat::NodesEdgesJsonl => {
            let nodes = dir.join(NODES_FILE);
            write_lines(&nodes, graph.nodes()).map_err(KgError::store(&nodes))?;
            let edges = dir.join(EDGES_FILE);
            write_lines(&edges, graph.edges()).map_err(KgError::store(&edges))?;
            Ok(vec![nodes, edges])
        }
        ExportFormat::GraphScript => {
            let path = dir.join(SCRIPT_FILE);
            fs::write(&path, graph_script(graph)).map_err(KgError::store(&path))?;
            Ok(vec![path])
        }
    }
}

/// Reads a `nodes.jsonl` + `edges.jsonl` pair back into a graph.
pub fn import_graph(dir: &Path, vocabulary: RelationVocabulary) -> Result<KnowledgeGraph, KgError> {
    let corrupt = |path: &Path, e: std::io::Error| match e.kind() {
        std::io::ErrorKind::InvalidData => KgError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        _ => KgError::Store {
            path: path.to_path_buf(),
            source: e,
        },
    };
    let nodes_path = dir.join(NODES_FILE);
    let edges_path = dir.join(EDGES_FILE);
    let nodes: Vec<GraphNode> = read_lines(&nodes_path).map_err(|e| corrupt(&nodes_path, e))?;
    let edges: Vec<GraphEdge> = read_lines(&edges_path).map_err(|e| corrupt(&edges_path, e))?;
    let mut graph = KnowledgeGraph::new(vocabulary);
    for n in nodes {
        graph.insert_node(n);
    }
    for e in edges {
        graph.insert_edge(e)?;
    }
    Ok(graph)
}

/// Cypher string literal.
fn lit(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn list<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    let parts: Vec<String> = items.into_iter().map(|s| lit(s)).collect();
    format!("[{}]", parts.join(", "))
}

fn ident(s: &str) -> String {
    format!("`{}`", s.replace('`', "``"))
}

pub fn graph_script(graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for n in graph.nodes() {
        out.push_str(&format!(
            "MERGE (n:{} {{node_id: {}}}) SET n.name = {}, n.aliases = {};\n",
            ident(n.label.as_str()),
            lit(&n.node_id),
            lit(&n.name),
            list(&n.aliases)
        ));
    }
    for e in graph.edges() {
        out.push_str(&format!(
            "MATCH (a {{node_id: {}}}), (b {{node_id: {}}}) MERGE (a)-[r:{}]->(b) SET r.provenance = {};\n",
            lit(&e.src),
            lit(&e.dst),
            ident(&e.relation),
            list(&e.provenance)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityRef, EntityType, Triple};

    fn graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::default();
        g.upsert_triples(&[
            Triple {
                head: EntityRef::new("O'Brien factor", EntityType::Protein),
                relation: "interacts_with".into(),
                tail: EntityRef::new("EGFR", EntityType::Protein),
                provenance_doc_id: "D1".into(),
            },
            Triple {
                head: EntityRef::new("Gefitinib", EntityType::Drug),
                relation: "targets".into(),
                tail: EntityRef::new("EGFR", EntityType::Protein),
                provenance_doc_id: "D2".into(),
            },
        ])
        .unwrap();
        g
    }

    #[test]
    fn jsonl_round_trip() {
        let g = graph();
        let dir = tempfile::tempdir().unwrap();
        let files = export_graph(&g, dir.path(), ExportFormat::NodesEdgesJsonl).unwrap();
        let lines = |p: &Path| fs::read_to_string(p).unwrap().lines().count();
        assert_eq!(lines(&files[0]), g.node_count());
        assert_eq!(lines(&files[1]), g.edge_count());
        let back = import_graph(dir.path(), RelationVocabulary::default()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn script_has_one_statement_per_item() {
        let g = graph();
        let s = graph_script(&g);
        assert_eq!(s.lines().count(), g.node_count() + g.edge_count());
        assert!(s.lines().all(|l| l.contains("MERGE") && l.ends_with(';')));
        assert!(s.contains(r"'O\'Brien factor'"));
    }

    #[test]
    fn empty_graph_is_not_exported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_graph(&KnowledgeGraph::default(), dir.path(), ExportFormat::GraphScript),
            Err(KgError::EmptyGraph)
        ));
    }

    #[test]
    fn import_rejects_dangling_edges() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(NODES_FILE), "").unwrap();
        fs::write(
            dir.path().join(EDGES_FILE),
            r#"{"src":"Gene:a","dst":"Gene:b","relation":"regulates","provenance":["D"]}"#,
        )
        .unwrap();
        assert!(matches!(
            import_graph(dir.path(), RelationVocabulary::default()),
            Err(KgError::UnknownNode(_))
        ));
    }
}
