//! Property tests for invariants that span module boundaries.

use std::collections::BTreeSet;

use proptest::prelude::*;
use ragweave::corpus::{ChunkLevel, ChunkPolicy, Corpus, Document};
use ragweave::generation::{admitted_chunks, ChunkSupport};
use ragweave::index::{vector_search, Channel, IndexSet, RetrievalHit};
use ragweave::kg::{
    canonicalize_incremental, export_graph, import_graph, query_subgraph, CanonRegistry, Direction, EntityRef, EntityType,
    ExportFormat, KnowledgeGraph, Triple,
};
use ragweave::providers::{cosine_similarity, Embedder, HashingEmbedder};
use ragweave::retrieval::{aggregate, AggregatorWeights};

const WORDS: [&str; 16] = [
    "kinase", "tumour", "insulin", "neuron", "gut", "virus", "antibody", "liver", "the", "of", "cells", "patients", "risk",
    "dose", "trial", "gene",
];

fn text(max_words: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(&WORDS[..]), 1..max_words).prop_map(|w| w.join(" "))
}

fn hits() -> impl Strategy<Value = Vec<RetrievalHit>> {
    let one = (0usize..12, 0usize..6, 0.0f64..=1.0);
    proptest::collection::vec(one, 1..60).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (chunk, channel, similarity))| RetrievalHit {
                // The chunk decides its document so the pairing is consistent.
                chunk_id: format!("d{}::c{chunk}", chunk % 4),
                doc_id: format!("d{}", chunk % 4),
                channel: Channel::ALL[channel],
                similarity,
                rank: i + 1,
            })
            .collect()
    })
}

fn corpus(abstracts: &[String]) -> Corpus {
    let docs = abstracts
        .iter()
        .enumerate()
        .map(|(i, a)| Document {
            doc_id: format!("D{i:02}"),
            title: String::new(),
            abstract_text: a.clone(),
            body: format!("{a}\n\nMore text about {a}"),
            year: None,
            keywords: vec![],
            cited_doc_ids: vec![],
        })
        .collect();
    Corpus::build(docs, ChunkPolicy::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_are_positive_and_bounded(hits in hits()) {
        let w = AggregatorWeights::default();
        let out = aggregate(&hits, &w).unwrap();
        let s_max = out.iter().map(|c| c.s_sim).fold(0.0, f64::max);
        let m_max = out.iter().map(|c| c.m).max().unwrap();
        let r_max = out.iter().map(|c| c.r).max().unwrap();
        for c in &out {
            prop_assert!(c.score > 0.0 && c.score <= w.total() + 1e-12);
            if c.s_sim == s_max && c.m == m_max && c.r == r_max && s_max > 0.0 {
                prop_assert!((c.score - w.total()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ranking_is_scale_invariant(hits in hits(), scale in 0.01f64..1.0) {
        let w = AggregatorWeights::default();
        let scaled: Vec<RetrievalHit> = hits
            .iter()
            .map(|h| RetrievalHit { similarity: h.similarity * scale, ..h.clone() })
            .collect();
        let order = |hs: &[RetrievalHit]| aggregate(hs, &w).unwrap().into_iter().map(|c| c.chunk_id).collect::<Vec<_>>();
        let a = aggregate(&hits, &w).unwrap();
        // Rescaling can move scores by an ulp, so exact ties may reorder.
        let distinct = a.windows(2).all(|p| (p[0].score - p[1].score).abs() > 1e-9);
        if distinct {
            prop_assert_eq!(order(&hits), order(&scaled));
        }
    }

    #[test]
    fn hashing_embedder_is_self_similar_and_never_zero(t in ".{0,40}", dims in 1usize..64) {
        let e = HashingEmbedder::new(dims);
        if t.trim().is_empty() {
            prop_assert!(e.embed(&t).is_err());
            return Ok(());
        }
        let a = e.embed(&t).unwrap();
        let b = e.embed(&t).unwrap();
        prop_assert!(!a.is_zero());
        prop_assert_eq!(&a, &b);
        prop_assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vector_search_is_prefix_closed(abstracts in proptest::collection::vec(text(12), 2..12), q in text(6), k1 in 1usize..6, extra in 1usize..6) {
        let c = corpus(&abstracts);
        let e = HashingEmbedder::new(64);
        let idx = IndexSet::build(&c, &e).unwrap();
        let index = idx.vectors(ChunkLevel::Abstract);
        let small = vector_search(index, &q, k1, &e, Channel::QuestionAbstract).unwrap();
        let large = vector_search(index, &q, k1 + extra, &e, Channel::QuestionAbstract).unwrap();
        prop_assert_eq!(&large[..small.len()], &small[..]);
        prop_assert_eq!(small, vector_search(index, &q, k1, &e, Channel::QuestionAbstract).unwrap());
    }

    #[test]
    fn chunking_is_deterministic(abstracts in proptest::collection::vec(text(30), 1..6)) {
        let a = corpus(&abstracts);
        let b = corpus(&abstracts);
        prop_assert_eq!(serde_json::to_string(a.chunks()).unwrap(), serde_json::to_string(b.chunks()).unwrap());
    }

    #[test]
    fn admitted_set_is_nonempty_when_support_is(scores in proptest::collection::vec(0u8..=100, 1..10), threshold in 0u32..=100) {
        let support: Vec<ChunkSupport> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| ChunkSupport { chunk_id: format!("c{i}"), score: *s })
            .collect();
        let passed = admitted_chunks(&support, threshold);
        prop_assert!(!passed.is_empty());
        let any_pass = scores.iter().any(|s| u32::from(*s) >= threshold);
        let expected = if any_pass { scores.iter().filter(|s| u32::from(**s) >= threshold).count() } else { scores.len() };
        prop_assert_eq!(passed.len(), expected);
    }

    #[test]
    fn merges_are_sticky(names in proptest::collection::vec(text(3), 1..20)) {
        let e = HashingEmbedder::new(32);
        let mut reg = CanonRegistry::new();
        for n in &names {
            canonicalize_incremental(n, &mut reg, &e, 0.5).unwrap();
        }
        for entry in reg.entries() {
            for alias in &entry.aliases {
                prop_assert_eq!(reg.lookup(alias), Some(entry.canonical_name.as_str()));
            }
        }
        for n in &names {
            prop_assert!(reg.lookup(n).is_some());
        }
    }

    #[test]
    fn subgraphs_are_closed_and_exports_round_trip(
        edges in proptest::collection::vec((0u8..10, 0u8..10, 0usize..3), 1..30),
        seed in 0u8..10,
        hops in 0usize..4,
    ) {
        let relations = ["regulates", "inhibits", "targets"];
        let triples: Vec<Triple> = edges
            .iter()
            .filter(|(a, b, _)| a != b)
            .map(|(a, b, r)| Triple {
                head: EntityRef::new(format!("g{a}"), EntityType::Gene),
                relation: relations[*r].into(),
                tail: EntityRef::new(format!("g{b}"), EntityType::Gene),
                provenance_doc_id: "D".into(),
            })
            .collect();
        prop_assume!(!triples.is_empty());
        let mut g = KnowledgeGraph::default();
        g.upsert_triples(&triples).unwrap();
        let seed_id = format!("Gene:g{seed}");
        if g.node(&seed_id).is_some() {
            let s = query_subgraph(&g, &[seed_id.as_str()], hops, None, Direction::Both).unwrap();
            let ids: BTreeSet<&str> = s.node_ids().into_iter().collect();
            for e in &s.edges {
                prop_assert!(ids.contains(e.src.as_str()) && ids.contains(e.dst.as_str()));
                prop_assert_eq!(g.edge(&e.src, &e.dst, &e.relation), Some(e));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        export_graph(&g, dir.path(), ExportFormat::NodesEdgesJsonl).unwrap();
        let back = import_graph(dir.path(), g.vocabulary().clone()).unwrap();
        prop_assert_eq!(back, g);
    }
}
