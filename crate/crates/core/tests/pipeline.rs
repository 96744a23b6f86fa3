use std::path::PathBuf;
use std::sync::Arc;

use ragweave::corpus::{ingest_corpus, ChunkPolicy, Corpus, SourceFormat};
use ragweave::eval::{load_dataset, run_eval, EvalConfig};
use ragweave::generation::{Engine, GenerationConfig, PipelineVariant};
use ragweave::index::IndexSet;
use ragweave::providers::{HashingEmbedder, PromptTemplates, ProviderHub, ProviderScript};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn hub() -> ProviderHub {
    let script = ProviderScript::load(&fixtures().join("run1.jsonl")).unwrap();
    ProviderHub::scripted(script, Arc::new(HashingEmbedder::new(256)))
}

fn corpus() -> Corpus {
    let (docs, report) = ingest_corpus(&fixtures().join("corpus.jsonl"), SourceFormat::Jsonl).unwrap();
    assert!(report.rejections.is_empty());
    Corpus::build(docs, ChunkPolicy::default()).unwrap()
}

fn engine(corpus: Corpus, indexes: IndexSet, variant: PipelineVariant) -> Engine {
    let config = GenerationConfig {
        variant,
        ..GenerationConfig::default()
    };
    Engine::new(corpus, indexes, hub(), PromptTemplates::default(), config)
}

#[test]
fn persisted_artifacts_answer_like_fresh_ones() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus();
    let hub = hub();
    let indexes = IndexSet::build(&corpus, hub.embedder()).unwrap();
    corpus.save(&dir.path().join("corpus")).unwrap();
    indexes.save(&dir.path().join("indexes")).unwrap();

    let loaded_corpus = Corpus::load(&dir.path().join("corpus")).unwrap();
    let loaded_indexes = IndexSet::load(&dir.path().join("indexes")).unwrap();
    assert_eq!(loaded_corpus.documents(), corpus.documents());
    assert_eq!(loaded_corpus.chunks(), corpus.chunks());

    let q = "How does olaparib act in BRCA-mutated ovarian cancer?";
    let fresh = engine(corpus, indexes, PipelineVariant::Full).answer(q).unwrap();
    let reloaded = engine(loaded_corpus, loaded_indexes, PipelineVariant::Full).answer(q).unwrap();
    assert_eq!(fresh, reloaded);
    assert!(fresh.final_answer.is_some());
    assert!(!fresh.final_support_chunk_ids.is_empty());
}

#[test]
fn fixture_evaluation_matches_hand_computed_report() {
    let corpus = corpus();
    let indexes = IndexSet::build(&corpus, hub().embedder()).unwrap();
    let engine = engine(corpus, indexes, PipelineVariant::Full);
    let records = load_dataset(&fixtures().join("dataset.jsonl")).unwrap();
    let report = run_eval(&records, &engine, &EvalConfig::default()).unwrap();

    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected_report.json")).unwrap()).unwrap();
    let o = &expected["overall"];
    let close = |got: f64, key: &str| {
        let want = o[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-9, "{key}: {got} vs {want}");
    };
    assert_eq!(report.overall.count, 5);
    assert_eq!(report.overall.failures, 0);
    close(report.overall.precision, "precision");
    close(report.overall.recall, "recall");
    close(report.overall.f1, "f1");
    close(report.overall.map, "map");
    close(report.overall.gmap, "gmap");
    close(report.overall.mrr, "mrr");
    close(report.overall.union_recall, "union_recall");
    close(report.overall.judge_score.unwrap(), "judge_score");
}

#[test]
fn closed_book_variant_skips_retrieval() {
    let corpus = corpus();
    let indexes = IndexSet::build(&corpus, hub().embedder()).unwrap();
    let e = engine(corpus, indexes, PipelineVariant::WithoutRetrieval);
    // The fixture script has no closed-book entries, so the call fails
    // before anything is retrieved.
    let err = e.answer("Is metformin associated with reduced colorectal cancer risk?").unwrap_err();
    assert!(err.trace.hits.is_empty());
    assert!(err.trace.candidates.is_empty());
}
