use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    canonicalize_incremental, extract_doc_meta, extract_triples, normalize_entity, rename_entries, CanonRegistry, DocMeta,
    EntityRef, EntityType, Extraction, KgError, KnowledgeGraph, Lexicon, MutationReport, PaperLink, RelationVocabulary,
    Triple,
};
use crate::corpus::Corpus;
use crate::providers::{PromptTemplates, ProviderHub, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgBuildConfig {
    pub relations: RelationVocabulary,
    /// Lexicon candidates shown to the adjudicator per entity.
    pub normalization_candidates: usize,
    /// Document-level names merge when cosine is strictly above this.
    pub merge_threshold: f64,
    pub extract_meta: bool,
    /// Let the extractor pick display names for merged document-level entries.
    pub rename_pass: bool,
}

impl Default for KgBuildConfig {
    fn default() -> Self {
        Self {
            relations: RelationVocabulary::default(),
            normalization_candidates: 5,
            merge_threshold: 0.5,
            extract_meta: true,
            rename_pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KgBuildReport {
    pub documents: usize,
    pub entity_triples: usize,
    pub meta_triples: usize,
    pub entities_normalized: usize,
    pub entities_unnormalized: usize,
    pub renames: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub failures: Vec<DocFailure>,
    pub mutations: MutationReport,
    pub nodes: usize,
    pub edges: usize,
}

struct DocResult {
    doc_id: String,
    extraction: Extraction,
    meta: Option<DocMeta>,
    failures: Vec<DocFailure>,
}

fn failure(doc_id: &str, stage: &str, e: &KgError) -> DocFailure {
    DocFailure {
        doc_id: doc_id.to_string(),
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

/// Builds the graph for a whole corpus. Extraction runs in parallel per
/// document; normalization, canonicalization and all graph writes run
/// sequentially in document order, so the result does not depend on the
/// thread count. Per-document failures are reported, not fatal.
pub fn build_graph(
    corpus: &Corpus,
    lexicons: &[(Vec<EntityType>, Lexicon)],
    hub: &ProviderHub,
    templates: &PromptTemplates,
    config: &KgBuildConfig,
) -> Result<(KnowledgeGraph, KgBuildReport), KgError> {
    let results: Vec<DocResult> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let session = Session::new(hub, templates);
            let mut out = DocResult {
                doc_id: doc.doc_id.clone(),
                extraction: Extraction::default(),
                meta: None,
                failures: vec![],
            };
            if !doc.abstract_text.trim().is_empty() {
                match extract_triples(&doc.doc_id, &doc.abstract_text, &config.relations, &session) {
                    Ok(x) => out.extraction = x,
                    Err(e) => out.failures.push(failure(&doc.doc_id, "triplet_extraction", &e)),
                }
            }
            if config.extract_meta {
                match extract_doc_meta(doc, &session) {
                    Ok((meta, _)) => out.meta = Some(meta),
                    Err(e) => out.failures.push(failure(&doc.doc_id, "meta_extraction", &e)),
                }
            }
            out
        })
        .collect();

    let mut report = KgBuildReport {
        documents: results.len(),
        ..Default::default()
    };
    let session = Session::new(hub, templates);
    let lexicon_for = |t: EntityType| lexicons.iter().find(|(types, _)| types.contains(&t)).map(|(_, l)| l);

    let mut cache: BTreeMap<(EntityType, String), EntityRef> = BTreeMap::new();
    let mut entity_triples: Vec<Triple> = Vec::new();
    for r in &results {
        report.failures.extend(r.failures.iter().cloned());
        report.warnings.extend(r.extraction.warnings.iter().cloned());
        for t in &r.extraction.triples {
            let mut t = t.clone();
            for e in [&mut t.head, &mut t.tail] {
                let key = (e.entity_type, e.surface.to_lowercase());
                if let Some(done) = cache.get(&key) {
                    e.canonical_id = done.canonical_id.clone();
                    e.canonical_name = done.canonical_name.clone();
                    continue;
                }
                if let Some(lex) = lexicon_for(e.entity_type) {
                    match normalize_entity(e, lex, hub.embedder(), &session, config.normalization_candidates) {
                        Ok(n) => *e = n.entity,
                        Err(err) => report.failures.push(failure(&r.doc_id, "normalization", &err)),
                    }
                }
                if e.is_canonical() {
                    report.entities_normalized += 1;
                } else {
                    report.entities_unnormalized += 1;
                }
                cache.insert(key, e.clone());
            }
            if t.head.node_id() == t.tail.node_id() && !config.relations.allows_self_loops() {
                report
                    .warnings
                    .push(format!("{}: dropped self-loop on {} after normalization", r.doc_id, t.head.node_id()));
                continue;
            }
            entity_triples.push(t);
        }
    }

    let mut registries: BTreeMap<EntityType, CanonRegistry> = BTreeMap::new();
    let mut meta_triples: Vec<Triple> = Vec::new();
    for r in &results {
        let Some(meta) = &r.meta else { continue };
        for t in meta.triples(&r.doc_id) {
            let reg = registries.entry(t.tail.entity_type).or_default();
            canonicalize_incremental(&t.tail.surface, reg, hub.embedder(), config.merge_threshold)?;
            meta_triples.push(t);
        }
    }
    if config.rename_pass {
        for (ty, reg) in registries.iter_mut() {
            report.renames.extend(rename_entries(reg, *ty, &session)?);
        }
    }
    for t in &mut meta_triples {
        let reg = &registries[&t.tail.entity_type];
        t.tail.canonical_name = reg.lookup(&t.tail.surface).map(str::to_string);
    }

    report.entity_triples = entity_triples.len();
    report.meta_triples = meta_triples.len();
    let mut graph = KnowledgeGraph::new(config.relations.clone());
    report.mutations += graph.upsert_triples(&entity_triples)?;
    report.mutations += graph.upsert_triples(&meta_triples)?;
    let papers: Vec<PaperLink> = corpus
        .documents()
        .iter()
        .map(|d| PaperLink {
            doc_id: d.doc_id.clone(),
            cited_doc_ids: d.cited_doc_ids.clone(),
        })
        .collect();
    report.mutations += graph.link_documents(&papers);
    report.nodes = graph.node_count();
    report.edges = graph.edge_count();
    Ok((graph, report))
}
