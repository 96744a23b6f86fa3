use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use ragweave::corpus::{ingest_corpus, Corpus, SourceFormat};
use ragweave::eval::{load_dataset, render_table, run_eval, MetricReport};
use ragweave::generation::{AnswerTrace, Engine};
use ragweave::index::IndexSet;
use ragweave::kg::{build_graph, export_graph, import_graph, ExportFormat, KgBuildReport, KnowledgeGraph, Lexicon, EDGES_FILE, NODES_FILE};
use ragweave::providers::http::{ConcurrencyLimit, Endpoint, HttpEmbedder, HttpGenerator};
use ragweave::providers::{Embedder, HashingEmbedder, PromptTemplates, ProviderHub, ProviderScript, Role};
use ragweave::text::fnv1a64;
use serde::Serialize;

use crate::config::{EmbeddingSection, EngineConfig};
use crate::CliError;

pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const KG_REPORT_FILE: &str = "kg_report.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

/// Resolved configuration plus the flags that change provider wiring.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: EngineConfig,
    pub mock_script: Option<PathBuf>,
}

impl Context {
    pub fn new(config: EngineConfig, mock_script: Option<PathBuf>) -> Self {
        let mock_script = mock_script.or_else(|| config.paths.mock_script.clone());
        Self { config, mock_script }
    }

    fn script_digest(&self) -> Result<Option<String>, CliError> {
        self.mock_script
            .as_ref()
            .map(|p| {
                let bytes = fs::read(p).map_err(CliError::io(p))?;
                Ok(format!("{:016x}", fnv1a64(&bytes)))
            })
            .transpose()
    }

    fn snapshot(&self) -> Result<serde_json::Value, CliError> {
        Ok(self.config.snapshot(self.script_digest()?))
    }

    fn dims(&self) -> usize {
        match &self.config.providers.embedding {
            EmbeddingSection::Hashing { dims } | EmbeddingSection::Http { dims, .. } => *dims,
        }
    }

    /// Scripted mode replaces every generator with the script and the
    /// embedder with the hashing embedder at the configured width.
    pub fn hub(&self) -> Result<ProviderHub, CliError> {
        if let Some(path) = &self.mock_script {
            let script = ProviderScript::load(path)?;
            return Ok(ProviderHub::scripted(script, Arc::new(HashingEmbedder::new(self.dims()))));
        }
        let p = &self.config.providers;
        let limit = ConcurrencyLimit::new(p.max_concurrency);
        let embedder: Arc<dyn Embedder> = match &p.embedding {
            EmbeddingSection::Hashing { dims } => Arc::new(HashingEmbedder::new(*dims)),
            EmbeddingSection::Http {
                base_url,
                model,
                dims,
                api_key_env,
            } => {
                let endpoint = Endpoint {
                    base_url: base_url.clone(),
                    model: model.clone(),
                    api_key_env: api_key_env.clone(),
                };
                Arc::new(HttpEmbedder::new(endpoint, *dims, p.retry, limit.clone()))
            }
        };
        let e = &p.endpoints;
        let mut hub = ProviderHub::new(embedder);
        for (role, section) in [
            (Role::Reasoner, &e.reasoner),
            (Role::DeepThinker, &e.deep_thinker),
            (Role::Judge, &e.judge),
            (Role::Extractor, &e.extractor),
        ] {
            if let Some(section) = section {
                hub = hub.with_generator(role, Arc::new(HttpGenerator::new(section.into(), p.retry, limit.clone())));
            }
        }
        Ok(hub)
    }

    pub fn templates(&self) -> Result<PromptTemplates, CliError> {
        Ok(match &self.config.paths.templates {
            Some(dir) => PromptTemplates::with_overrides(dir)?,
            None => PromptTemplates::default(),
        })
    }

    fn load_corpus(&self) -> Result<Corpus, CliError> {
        let dir = &self.config.paths.corpus;
        if !dir.join("corpus.json").is_file() {
            return Err(CliError::MissingArtifact {
                artifact: "corpus",
                path: dir.clone(),
                produced_by: "ingest",
            });
        }
        Ok(Corpus::load(dir)?)
    }

    fn load_indexes(&self) -> Result<IndexSet, CliError> {
        let dir = &self.config.paths.indexes;
        if !IndexSet::exists(dir) {
            return Err(CliError::MissingArtifact {
                artifact: "index",
                path: dir.clone(),
                produced_by: "index",
            });
        }
        Ok(IndexSet::load(dir)?)
    }

    pub fn engine(&self) -> Result<Engine, CliError> {
        let indexes = self.load_indexes()?;
        let corpus = self.load_corpus()?;
        Ok(Engine::new(corpus, indexes, self.hub()?, self.templates()?, self.config.generation_config()))
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub chunks: usize,
    pub rejected: usize,
}

pub fn cmd_ingest(ctx: &Context, source: &Path, format: Option<SourceFormat>) -> Result<IngestSummary, CliError> {
    let format = format.unwrap_or_else(|| SourceFormat::detect(source));
    let (docs, report) = ingest_corpus(source, format)?;
    for r in &report.rejections {
        warn!("rejected record {}: {}", r.record, r.reason);
    }
    let corpus = Corpus::build(docs, ctx.config.chunking)?;
    let dir = &ctx.config.paths.corpus;
    corpus.save(dir)?;
    write_json(&dir.join(INGEST_REPORT_FILE), &report)?;
    info!("corpus written to {}", dir.display());
    Ok(IngestSummary {
        documents: corpus.documents().len(),
        chunks: corpus.chunks().len(),
        rejected: report.rejections.len(),
    })
}

pub fn cmd_index(ctx: &Context) -> Result<PathBuf, CliError> {
    let corpus = ctx.load_corpus()?;
    let hub = ctx.hub()?;
    let indexes = IndexSet::build(&corpus, hub.embedder())?;
    let dir = &ctx.config.paths.indexes;
    indexes.save(dir)?;
    Ok(dir.clone())
}

/// Default trace location: one file per distinct question.
pub fn default_trace_path(ctx: &Context, question: &str) -> PathBuf {
    ctx.config
        .paths
        .traces
        .join(format!("trace-{:016x}.json", fnv1a64(question.as_bytes())))
}

/// Runs the pipeline and always writes a trace, partial on failure.
pub fn cmd_ask(ctx: &Context, question: &str, trace_path: Option<&Path>) -> Result<(AnswerTrace, PathBuf), CliError> {
    let engine = ctx.engine()?;
    let path = trace_path.map_or_else(|| default_trace_path(ctx, question), Path::to_path_buf);
    let snapshot = ctx.snapshot()?;
    match engine.answer(question) {
        Ok(mut trace) => {
            trace.config = Some(snapshot);
            write_json(&path, &trace)?;
            Ok((trace, path))
        }
        Err(e) => {
            let mut trace = *e.trace;
            trace.config = Some(snapshot);
            write_json(&path, &trace)?;
            Err(CliError::Pipeline {
                message: format!("{} failed: {}", e.stage, e.message),
                trace: path,
            })
        }
    }
}

pub fn cmd_eval(ctx: &Context, dataset: &Path, out_dir: Option<&Path>) -> Result<(MetricReport, PathBuf), CliError> {
    let engine = ctx.engine()?;
    if !dataset.is_file() {
        return Err(CliError::MissingArtifact {
            artifact: "dataset",
            path: dataset.to_path_buf(),
            produced_by: "eval <dataset>",
        });
    }
    let records = load_dataset(dataset)?;
    let mut report = run_eval(&records, &engine, &ctx.config.eval_config())?;
    report.config = Some(ctx.snapshot()?);
    let dir = out_dir.map_or_else(|| ctx.config.paths.reports.clone(), Path::to_path_buf);
    write_json(&dir.join(REPORT_JSON_FILE), &report)?;
    let table = render_table(&report);
    fs::write(dir.join(REPORT_TEXT_FILE), &table).map_err(CliError::io(dir.join(REPORT_TEXT_FILE)))?;
    Ok((report, dir))
}

pub fn cmd_kg_build(ctx: &Context) -> Result<KgBuildReport, CliError> {
    let corpus = ctx.load_corpus()?;
    let hub = ctx.hub()?;
    let templates = ctx.templates()?;
    let lexicons = ctx
        .config
        .kg
        .lexicons
        .iter()
        .map(|spec| Ok((spec.types.clone(), Lexicon::load(&spec.path, hub.embedder())?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let (graph, report) = build_graph(&corpus, &lexicons, &hub, &templates, &ctx.config.kg_config())?;
    for f in &report.failures {
        warn!("{} {}: {}", f.doc_id, f.stage, f.message);
    }
    let dir = &ctx.config.paths.graph;
    if graph.is_empty() {
        return Err(CliError::Kg(ragweave::kg::KgError::EmptyGraph));
    }
    export_graph(&graph, dir, ExportFormat::NodesEdgesJsonl)?;
    write_json(&dir.join(KG_REPORT_FILE), &report)?;
    Ok(report)
}

pub fn load_graph(ctx: &Context) -> Result<KnowledgeGraph, CliError> {
    let dir = &ctx.config.paths.graph;
    if !(dir.join(NODES_FILE).is_file() && dir.join(EDGES_FILE).is_file()) {
        return Err(CliError::MissingArtifact {
            artifact: "graph",
            path: dir.clone(),
            produced_by: "kg build",
        });
    }
    Ok(import_graph(dir, ctx.config.kg_config().relations)?)
}

pub fn cmd_kg_export(ctx: &Context, format: ExportFormat, out_dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let graph = load_graph(ctx)?;
    let dir = out_dir.map_or_else(|| ctx.config.paths.graph.join("export"), Path::to_path_buf);
    Ok(export_graph(&graph, &dir, format)?)
}
