use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{GraphEdge, GraphNode, KgError, KnowledgeGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    /// `(hop, node)` ordered by hop, then node id.
    pub nodes: Vec<(usize, GraphNode)>,
    /// Edges among the returned nodes that pass the relation filter.
    pub edges: Vec<GraphEdge>,
}

impl Subgraph {
    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|(_, n)| n.node_id.as_str()).collect()
    }
}

/// One simple path: `nodes[i] -edges[i]- nodes[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphPath {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

impl GraphPath {
    pub fn relations(&self) -> Vec<&str> {
        self.edges.iter().map(|e| e.relation.as_str()).collect()
    }
}

fn passes(edge: &GraphEdge, filter: Option<&BTreeSet<String>>) -> bool {
    filter.is_none_or(|f| f.contains(&edge.relation))
}

/// Neighbour lists in sorted order: `node -> [(neighbour, edge)]`.
fn adjacency<'g>(
    graph: &'g KnowledgeGraph,
    direction: Direction,
    filter: Option<&BTreeSet<String>>,
) -> BTreeMap<&'g str, Vec<(&'g str, &'g GraphEdge)>> {
    let mut adj: BTreeMap<&str, Vec<(&str, &GraphEdge)>> = BTreeMap::new();
    for e in graph.edges().filter(|e| passes(e, filter)) {
        if matches!(direction, Direction::Outgoing | Direction::Both) {
            adj.entry(&e.src).or_default().push((&e.dst, e));
        }
        if matches!(direction, Direction::Incoming | Direction::Both) && e.src != e.dst {
            adj.entry(&e.dst).or_default().push((&e.src, e));
        }
    }
    for list in adj.values_mut() {
        list.sort_by(|a, b| a.0.cmp(b.0).then_with(|| a.1.relation.cmp(&b.1.relation)).then_with(|| a.1.src.cmp(&b.1.src)));
    }
    adj
}

/// Breadth-first expansion from `seeds` up to `max_hops`, following only
/// edges whose relation is in `relations` (all when `None`).
pub fn query_subgraph(
    graph: &KnowledgeGraph,
    seeds: &[&str],
    max_hops: usize,
    relations: Option<&BTreeSet<String>>,
    direction: Direction,
) -> Result<Subgraph, KgError> {
    if seeds.is_empty() {
        return Err(KgError::EmptyInput("seed list"));
    }
    if let Some(missing) = seeds.iter().find(|s| graph.node(s).is_none()) {
        return Err(KgError::UnknownNode(missing.to_string()));
    }
    let adj = adjacency(graph, direction, relations);
    let mut hop: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    for s in seeds {
        let s = graph.node(s).expect("checked above").node_id.as_str();
        if hop.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    while let Some(n) = queue.pop_front() {
        let h = hop[n];
        if h == max_hops {
            continue;
        }
        for (m, _) in adj.get(n).into_iter().flatten() {
            if !hop.contains_key(m) {
                hop.insert(m, h + 1);
                queue.push_back(m);
            }
        }
    }
    let mut nodes: Vec<(usize, GraphNode)> = hop
        .iter()
        .map(|(id, h)| (*h, graph.node(id).expect("node from graph").clone()))
        .collect();
    nodes.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.node_id.cmp(&b.1.node_id)));
    let edges = graph
        .edges()
        .filter(|e| passes(e, relations) && hop.contains_key(e.src.as_str()) && hop.contains_key(e.dst.as_str()))
        .cloned()
        .collect();
    Ok(Subgraph { nodes, edges })
}

/// All simple paths from `src` to `dst` with at most `max_len` edges, shortest
/// first, then in node/edge order.
pub fn query_paths(
    graph: &KnowledgeGraph,
    src: &str,
    dst: &str,
    max_len: usize,
    relations: Option<&BTreeSet<String>>,
    direction: Direction,
) -> Result<Vec<GraphPath>, KgError> {
    for id in [src, dst] {
        if graph.node(id).is_none() {
            return Err(KgError::UnknownNode(id.to_string()));
        }
    }
    let adj = adjacency(graph, direction, relations);
    let mut out = Vec::new();
    let mut nodes = vec![src];
    let mut edges: Vec<&GraphEdge> = Vec::new();
    dfs(&adj, dst, max_len, &mut nodes, &mut edges, &mut out);
    out.sort_by(|a, b| a.edges.len().cmp(&b.edges.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

fn dfs<'g>(
    adj: &BTreeMap<&'g str, Vec<(&'g str, &'g GraphEdge)>>,
    dst: &str,
    max_len: usize,
    nodes: &mut Vec<&'g str>,
    edges: &mut Vec<&'g GraphEdge>,
    out: &mut Vec<GraphPath>,
) {
    let here = *nodes.last().expect("path is never empty");
    if here == dst && !edges.is_empty() {
        out.push(GraphPath {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges.iter().map(|e| (*e).clone()).collect(),
        });
        return;
    }
    if edges.len() == max_len {
        return;
    }
    for (next, edge) in adj.get(here).into_iter().flatten() {
        if nodes.contains(next) {
            continue;
        }
        nodes.push(next);
        edges.push(edge);
        dfs(adj, dst, max_len, nodes, edges, out);
        nodes.pop();
        edges.pop();
    }
}
