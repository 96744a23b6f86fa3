use std::collections::{BTreeMap, BTreeSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::{
    node_id, EntityRef, EntityType, KgError, RelationVocabulary, Triple, CITES, SHARES_DATASET, SHARES_ENTITY,
    SHARES_METHOD,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_id: String,
    pub label: EntityType,
    pub name: String,
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub relation: String,
    pub provenance: BTreeSet<String>,
}

impl GraphEdge {
    pub fn edge_id(&self) -> String {
        format!("{}-[{}]->{}", self.src, self.relation, self.dst)
    }

    fn key(&self) -> EdgeKey {
        (self.src.clone(), self.dst.clone(), self.relation.clone())
    }
}

type EdgeKey = (String, String, String);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationReport {
    pub nodes_created: usize,
    pub nodes_merged: usize,
    pub edges_created: usize,
    pub edges_merged: usize,
}

impl AddAssign for MutationReport {
    fn add_assign(&mut self, o: Self) {
        self.nodes_created += o.nodes_created;
        self.nodes_merged += o.nodes_merged;
        self.edges_created += o.edges_created;
        self.edges_merged += o.edges_merged;
    }
}

/// Citation metadata used for paper-to-paper linking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperLink {
    pub doc_id: String,
    pub cited_doc_ids: Vec<String>,
}

/// In-memory property graph. Nodes are unique by id and edges by
/// `(src, dst, relation)`; re-asserting an edge only merges provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeGraph {
    vocabulary: RelationVocabulary,
    nodes: BTreeMap<String, GraphNode>,
    edges: BTreeMap<EdgeKey, GraphEdge>,
}

impl KnowledgeGraph {
    pub fn new(vocabulary: RelationVocabulary) -> Self {
        Self {
            vocabulary,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn vocabulary(&self) -> &RelationVocabulary {
        &self.vocabulary
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    /// Edges in `(src, dst, relation)` order.
    pub fn edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.values()
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn edge(&self, src: &str, dst: &str, relation: &str) -> Option<&GraphEdge> {
        self.edges.get(&(src.to_string(), dst.to_string(), relation.to_string()))
    }

    fn check(&self, t: &Triple) -> Result<(), KgError> {
        if !self.vocabulary.contains(&t.relation) {
            return Err(KgError::UnknownRelation(t.relation.clone()));
        }
        for e in [&t.head, &t.tail] {
            if e.display_name().trim().is_empty() {
                return Err(KgError::EmptyInput("entity name"));
            }
        }
        let head = t.head.node_id();
        if head == t.tail.node_id() && !self.vocabulary.allows_self_loops() {
            return Err(KgError::SelfLoop(head));
        }
        Ok(())
    }

    fn upsert_entity(&mut self, e: &EntityRef, report: &mut MutationReport) -> String {
        let id = e.node_id();
        match self.nodes.get_mut(&id) {
            Some(node) => {
                node.aliases.insert(e.surface.clone());
                report.nodes_merged += 1;
            }
            None => {
                self.nodes.insert(
                    id.clone(),
                    GraphNode {
                        node_id: id.clone(),
                        label: e.entity_type,
                        name: e.display_name().to_string(),
                        aliases: BTreeSet::from([e.surface.clone()]),
                    },
                );
                report.nodes_created += 1;
            }
        }
        id
    }

    fn upsert_edge(&mut self, edge: GraphEdge, report: &mut MutationReport) {
        match self.edges.get_mut(&edge.key()) {
            Some(existing) => {
                existing.provenance.extend(edge.provenance);
                report.edges_merged += 1;
            }
            None => {
                self.edges.insert(edge.key(), edge);
                report.edges_created += 1;
            }
        }
    }

    /// Validates the whole batch first, so a bad triple leaves the graph untouched.
    pub fn upsert_triples(&mut self, triples: &[Triple]) -> Result<MutationReport, KgError> {
        for t in triples {
            self.check(t)?;
        }
        let mut report = MutationReport::default();
        for t in triples {
            let src = self.upsert_entity(&t.head, &mut report);
            let dst = self.upsert_entity(&t.tail, &mut report);
            let edge = GraphEdge {
                src,
                dst,
                relation: t.relation.clone(),
                provenance: BTreeSet::from([t.provenance_doc_id.clone()]),
            };
            self.upsert_edge(edge, &mut report);
        }
        Ok(report)
    }

    /// Raw insertion used by import. Endpoints must already exist.
    pub fn insert_node(&mut self, node: GraphNode) -> MutationReport {
        let mut report = MutationReport::default();
        match self.nodes.get_mut(&node.node_id) {
            Some(n) => {
                n.aliases.extend(node.aliases);
                report.nodes_merged += 1;
            }
            None => {
                self.nodes.insert(node.node_id.clone(), node);
                report.nodes_created += 1;
            }
        }
        report
    }

    pub fn insert_edge(&mut self, edge: GraphEdge) -> Result<MutationReport, KgError> {
        if !self.vocabulary.contains(&edge.relation) {
            return Err(KgError::UnknownRelation(edge.relation));
        }
        for end in [&edge.src, &edge.dst] {
            if !self.nodes.contains_key(end) {
                return Err(KgError::UnknownNode(end.clone()));
            }
        }
        let mut report = MutationReport::default();
        self.upsert_edge(edge, &mut report);
        Ok(report)
    }

    /// Renames a node, re-keying it and every incident edge. If the new key
    /// already exists the two nodes are merged. Returns the new node id.
    pub fn rename_node(&mut self, old_id: &str, new_name: &str) -> Result<String, KgError> {
        let mut node = self.nodes.remove(old_id).ok_or_else(|| KgError::UnknownNode(old_id.to_string()))?;
        let new_id = node_id(node.label, new_name);
        node.aliases.insert(node.name.clone());
        node.name = new_name.to_string();
        node.node_id = new_id.clone();
        if let Some(existing) = self.nodes.get_mut(&new_id) {
            existing.aliases.extend(node.aliases);
        } else {
            self.nodes.insert(new_id.clone(), node);
        }
        if new_id == old_id {
            return Ok(new_id);
        }
        let touched: Vec<EdgeKey> = self
            .edges
            .keys()
            .filter(|(s, d, _)| s == old_id || d == old_id)
            .cloned()
            .collect();
        let mut sink = MutationReport::default();
        for key in touched {
            let mut edge = self.edges.remove(&key).expect("key just listed");
            let swap = |x: &mut String| {
                if x == old_id {
                    *x = new_id.clone();
                }
            };
            swap(&mut edge.src);
            swap(&mut edge.dst);
            if edge.src == edge.dst && !self.vocabulary.allows_self_loops() {
                continue;
            }
            self.upsert_edge(edge, &mut sink);
        }
        Ok(new_id)
    }

    /// Adds paper-to-paper edges: a share edge for every pair of corpus papers
    /// whose provenance meets at a common method, dataset or biomedical entity
    /// (smaller doc id as source), and a cites edge for every citation between
    /// two corpus papers. Missing paper nodes are created.
    pub fn link_documents(&mut self, papers: &[PaperLink]) -> MutationReport {
        let mut report = MutationReport::default();
        let in_corpus: BTreeSet<&str> = papers.iter().map(|p| p.doc_id.as_str()).collect();
        for p in papers {
            self.upsert_entity(&EntityRef::paper(&p.doc_id), &mut report);
        }

        let mut docs_by_node: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in self.edges.values() {
            for end in [&e.src, &e.dst] {
                docs_by_node
                    .entry(end.as_str())
                    .or_default()
                    .extend(e.provenance.iter().map(String::as_str).filter(|d| in_corpus.contains(d)));
            }
        }
        let mut links: Vec<GraphEdge> = Vec::new();
        for (id, docs) in &docs_by_node {
            let relation = match self.nodes[*id].label {
                EntityType::Method => SHARES_METHOD,
                EntityType::Dataset => SHARES_DATASET,
                t if t.is_biomedical() => SHARES_ENTITY,
                _ => continue,
            };
            let docs: Vec<&str> = docs.iter().copied().collect();
            for (i, a) in docs.iter().enumerate() {
                for b in &docs[i + 1..] {
                    links.push(GraphEdge {
                        src: node_id(EntityType::Paper, a),
                        dst: node_id(EntityType::Paper, b),
                        relation: relation.to_string(),
                        provenance: BTreeSet::from([a.to_string(), b.to_string()]),
                    });
                }
            }
        }
        for p in papers {
            for cited in p.cited_doc_ids.iter().filter(|c| in_corpus.contains(c.as_str()) && **c != p.doc_id) {
                links.push(GraphEdge {
                    src: node_id(EntityType::Paper, &p.doc_id),
                    dst: node_id(EntityType::Paper, cited),
                    relation: CITES.to_string(),
                    provenance: BTreeSet::from([p.doc_id.clone()]),
                });
            }
        }
        for edge in links {
            self.upsert_edge(edge, &mut report);
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{USES_DATASET, USES_METHOD};

    fn t(h: (&str, EntityType), r: &str, tl: (&str, EntityType), doc: &str) -> Triple {
        Triple {
            head: EntityRef::new(h.0, h.1),
            relation: r.into(),
            tail: EntityRef::new(tl.0, tl.1),
            provenance_doc_id: doc.into(),
        }
    }

    use EntityType::*;

    #[test]
    fn upsert_is_idempotent() {
        let mut g = KnowledgeGraph::default();
        let batch = vec![t(("Cisplatin", Drug), "treats", ("lymphoma", Disease), "D1")];
        let first = g.upsert_triples(&batch).unwrap();
        assert_eq!((first.nodes_created, first.edges_created), (2, 1));
        let second = g.upsert_triples(&batch).unwrap();
        assert_eq!(
            second,
            MutationReport {
                nodes_created: 0,
                nodes_merged: 2,
                edges_created: 0,
                edges_merged: 1
            }
        );
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn parallel_labelled_edges_and_provenance() {
        let mut g = KnowledgeGraph::default();
        g.upsert_triples(&[
            t(("Cisplatin", Drug), "treats", ("lymphoma", Disease), "D1"),
            t(("cisplatin", Drug), "inhibits", ("Lymphoma", Disease), "D2"),
            t(("Cisplatin", Drug), "treats", ("lymphoma", Disease), "D3"),
        ])
        .unwrap();
        assert_eq!(g.edge_count(), 2);
        let e = g.edge("Drug:cisplatin", "Disease:lymphoma", "treats").unwrap();
        assert_eq!(e.provenance, BTreeSet::from(["D1".to_string(), "D3".to_string()]));
        assert_eq!(g.node("Drug:cisplatin").unwrap().aliases.len(), 2);
    }

    #[test]
    fn fixture_batch_counts() {
        // 6 triples over 5 entities
        let mut g = KnowledgeGraph::default();
        let r = g
            .upsert_triples(&[
                t(("miR-375", Gene), "regulates", ("ITPKB", Gene), "D1"),
                t(("ITPKB", Gene), "associated_with", ("NSCLC", Disease), "D1"),
                t(("Gefitinib", Drug), "treats", ("NSCLC", Disease), "D2"),
                t(("Gefitinib", Drug), "targets", ("EGFR", Protein), "D2"),
                t(("EGFR", Protein), "biomarker_for", ("NSCLC", Disease), "D3"),
                t(("miR-375", Gene), "associated_with", ("NSCLC", Disease), "D3"),
            ])
            .unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (5, 6));
        assert_eq!((r.nodes_created, r.edges_created), (5, 6));
    }

    #[test]
    fn batch_validation_is_atomic() {
        let mut g = KnowledgeGraph::default();
        let err = g
            .upsert_triples(&[
                t(("A", Gene), "regulates", ("B", Gene), "D1"),
                t(("A", Gene), "cures", ("B", Gene), "D1"),
            ])
            .unwrap_err();
        assert!(matches!(err, KgError::UnknownRelation(_)));
        assert!(g.is_empty());
        assert!(matches!(
            g.upsert_triples(&[t(("A", Gene), "regulates", ("a", Gene), "D1")]),
            Err(KgError::SelfLoop(_))
        ));
        let mut loops = KnowledgeGraph::new(RelationVocabulary::default().with_self_loops(true));
        assert!(loops.upsert_triples(&[t(("A", Gene), "regulates", ("a", Gene), "D1")]).is_ok());
    }

    fn paper_meta(doc: &str, rel: &str, ty: EntityType, name: &str) -> Triple {
        Triple {
            head: EntityRef::paper(doc),
            relation: rel.into(),
            tail: EntityRef::new(name, ty),
            provenance_doc_id: doc.into(),
        }
    }

    #[test]
    fn linking_shares_and_citations() {
        let mut g = KnowledgeGraph::default();
        g.upsert_triples(&[
            paper_meta("A", USES_DATASET, Dataset, "TCGA"),
            paper_meta("B", USES_DATASET, Dataset, "TCGA"),
            paper_meta("A", USES_METHOD, Method, "RNA-seq"),
            paper_meta("C", USES_METHOD, Method, "RNA-seq"),
            t(("EGFR", Protein), "biomarker_for", ("NSCLC", Disease), "B"),
            t(("Gefitinib", Drug), "treats", ("NSCLC", Disease), "C"),
        ])
        .unwrap();
        let papers = vec![
            PaperLink {
                doc_id: "A".into(),
                cited_doc_ids: vec!["B".into(), "Z".into()],
            },
            PaperLink {
                doc_id: "B".into(),
                cited_doc_ids: vec![],
            },
            PaperLink {
                doc_id: "C".into(),
                cited_doc_ids: vec!["C".into()],
            },
        ];
        g.link_documents(&papers);
        let rel_count = |r: &str| g.edges().filter(|e| e.relation == r).count();
        assert_eq!(rel_count(SHARES_DATASET), 1);
        assert!(g.edge("Paper:A", "Paper:B", SHARES_DATASET).is_some());
        assert!(g.edge("Paper:A", "Paper:C", SHARES_METHOD).is_some());
        assert!(g.edge("Paper:B", "Paper:C", SHARES_ENTITY).is_some());
        assert_eq!(rel_count(SHARES_ENTITY), 1);
        assert_eq!(rel_count(CITES), 1);
        assert!(g.edge("Paper:A", "Paper:B", CITES).is_some());
        let before = (g.node_count(), g.edge_count());
        g.link_documents(&papers);
        assert_eq!(before, (g.node_count(), g.edge_count()));
    }

    #[test]
    fn rename_rekeys_edges_and_merges() {
        let mut g = KnowledgeGraph::default();
        g.upsert_triples(&[
            paper_meta("A", USES_METHOD, Method, "RNA seq"),
            paper_meta("B", USES_METHOD, Method, "RNA-seq"),
        ])
        .unwrap();
        assert_eq!(g.node_count(), 4);
        let id = g.rename_node("Method:rna seq", "RNA-seq").unwrap();
        assert_eq!(id, "Method:rna-seq");
        assert_eq!(g.node_count(), 3);
        assert!(g.edge("Paper:A", "Method:rna-seq", USES_METHOD).is_some());
        assert!(g.edges().all(|e| g.node(&e.src).is_some() && g.node(&e.dst).is_some()));
        assert!(g.node("Method:rna-seq").unwrap().aliases.contains("RNA seq"));
        assert!(matches!(g.rename_node("nope", "x"), Err(KgError::UnknownNode(_))));
    }
}
