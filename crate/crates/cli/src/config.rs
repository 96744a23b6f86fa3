//! TOML configuration. Every section is optional; missing keys take the
//! defaults below and unknown keys are rejected. Relative paths resolve
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use ragweave::corpus::ChunkPolicy;
use ragweave::eval::{DocCut, EvalConfig, FivePointMapping, JudgeMode};
use ragweave::generation::{GenerationConfig, PipelineVariant};
use ragweave::kg::{EntityType, KgBuildConfig, RelationVocabulary, DEFAULT_RELATIONS};
use ragweave::providers::http::{Endpoint, RetryPolicy};
use ragweave::retrieval::AggregatorWeights;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_LLM_KEY_ENV: &str = "IPRAR_LLM_API_KEY";
pub const DEFAULT_EMBED_KEY_ENV: &str = "IPRAR_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub indexes: PathBuf,
    pub graph: PathBuf,
    pub traces: PathBuf,
    pub reports: PathBuf,
    /// Directory of `<template_id>.txt` prompt overrides.
    pub templates: Option<PathBuf>,
    /// Scripted provider transcript; `--mock-script` takes precedence.
    pub mock_script: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        let base = PathBuf::from("ragweave-data");
        Self {
            corpus: base.join("corpus"),
            indexes: base.join("indexes"),
            graph: base.join("graph"),
            traces: base.join("traces"),
            reports: base.join("reports"),
            templates: None,
            mock_script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub k_per_channel: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self { k_per_channel: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub relevance_target: usize,
    /// Support scores run 0-100; chunks at or above this reach deep thinking.
    pub support_threshold: u32,
    pub variant: PipelineVariant,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            relevance_target: g.relevance_target,
            support_threshold: g.support_threshold,
            variant: g.variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSection {
    pub candidates: usize,
    pub merge_threshold: f64,
    pub rename_pass: bool,
}

impl Default for NormalizationSection {
    fn default() -> Self {
        let k = KgBuildConfig::default();
        Self {
            candidates: k.normalization_candidates,
            merge_threshold: k.merge_threshold,
            rename_pass: k.rename_pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSpec {
    pub path: PathBuf,
    pub types: Vec<EntityType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSection {
    pub relations: Vec<String>,
    pub allow_self_loops: bool,
    pub extract_meta: bool,
    pub lexicons: Vec<LexiconSpec>,
}

impl Default for KgSection {
    fn default() -> Self {
        Self {
            relations: DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect(),
            allow_self_loops: false,
            extract_meta: true,
            lexicons: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSection {
    /// Offline feature-hashing embedder.
    Hashing { dims: usize },
    Http {
        base_url: String,
        model: String,
        dims: usize,
        #[serde(default = "default_embed_key_env")]
        api_key_env: String,
    },
}

fn default_embed_key_env() -> String {
    DEFAULT_EMBED_KEY_ENV.to_string()
}

fn default_llm_key_env() -> String {
    DEFAULT_LLM_KEY_ENV.to_string()
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection::Hashing { dims: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_llm_key_env")]
    pub api_key_env: String,
}

impl From<&EndpointSection> for Endpoint {
    fn from(e: &EndpointSection) -> Self {
        Endpoint {
            base_url: e.base_url.clone(),
            model: e.model.clone(),
            api_key_env: e.api_key_env.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleEndpoints {
    pub reasoner: Option<EndpointSection>,
    pub deep_thinker: Option<EndpointSection>,
    pub judge: Option<EndpointSection>,
    pub extractor: Option<EndpointSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersSection {
    pub embedding: EmbeddingSection,
    pub endpoints: RoleEndpoints,
    pub retry: RetryPolicy,
    /// Upper bound on in-flight HTTP requests across all roles.
    pub max_concurrency: usize,
}

impl Default for ProvidersSection {
    fn default() -> Self {
        Self {
            embedding: EmbeddingSection::default(),
            endpoints: RoleEndpoints::default(),
            retry: RetryPolicy::default(),
            max_concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub gmap_epsilon: f64,
    pub judge: JudgeMode,
    pub judge_mapping: FivePointMapping,
    pub doc_cut: DocCut,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            gmap_epsilon: e.gmap_epsilon,
            judge: e.judge,
            judge_mapping: e.judge_mapping,
            doc_cut: e.doc_cut,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub paths: Paths,
    pub chunking: ChunkPolicy,
    pub retrieval: RetrievalSection,
    pub aggregator: AggregatorWeights,
    pub generation: GenerationSection,
    pub normalization: NormalizationSection,
    pub kg: KgSection,
    pub providers: ProvidersSection,
    pub eval: EvalSection,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string().trim().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative paths become relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => invalid(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [&mut paths.corpus, &mut paths.indexes, &mut paths.graph, &mut paths.traces, &mut paths.reports] {
            fix(p);
        }
        for p in [paths.templates.as_mut(), paths.mock_script.as_mut()].into_iter().flatten() {
            fix(p);
        }
        for l in &mut self.kg.lexicons {
            fix(&mut l.path);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.chunking.validate().map_err(|e| invalid(e.to_string()))?;
        if self.retrieval.k_per_channel == 0 {
            return Err(invalid("retrieval.k_per_channel must be positive"));
        }
        self.aggregator.validate().map_err(|e| invalid(e.to_string()))?;
        let g = &self.generation;
        if g.relevance_target == 0 {
            return Err(invalid("generation.relevance_target must be positive"));
        }
        if g.support_threshold > 100 {
            return Err(invalid("generation.support_threshold must be within 0..=100"));
        }
        match g.variant {
            PipelineVariant::WithoutIntegratedRetrieval { top_n } | PipelineVariant::WithoutProgressiveGeneration { top_n }
                if top_n == 0 =>
            {
                return Err(invalid("generation.variant.top_n must be positive"));
            }
            _ => {}
        }
        let n = &self.normalization;
        if n.candidates == 0 {
            return Err(invalid("normalization.candidates must be positive"));
        }
        if !(0.0..=1.0).contains(&n.merge_threshold) {
            return Err(invalid("normalization.merge_threshold must be within [0, 1]"));
        }
        if self.kg.relations.is_empty() || self.kg.relations.iter().any(|r| r.trim().is_empty()) {
            return Err(invalid("kg.relations must be a non-empty list of non-empty names"));
        }
        if self.kg.lexicons.iter().any(|l| l.types.is_empty()) {
            return Err(invalid("every kg.lexicons entry needs at least one type"));
        }
        let dims = match &self.providers.embedding {
            EmbeddingSection::Hashing { dims } | EmbeddingSection::Http { dims, .. } => *dims,
        };
        if dims == 0 {
            return Err(invalid("providers.embedding.dims must be positive"));
        }
        if self.providers.max_concurrency == 0 {
            return Err(invalid("providers.max_concurrency must be positive"));
        }
        if self.providers.retry.max_attempts == 0 {
            return Err(invalid("providers.retry.max_attempts must be positive"));
        }
        if !(self.eval.gmap_epsilon >= 0.0 && self.eval.gmap_epsilon.is_finite()) {
            return Err(invalid("eval.gmap_epsilon must be finite and non-negative"));
        }
        if let DocCut::TopCandidates { n: 0 } = self.eval.doc_cut {
            return Err(invalid("eval.doc_cut.n must be positive"));
        }
        Ok(())
    }

    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            k_per_channel: self.retrieval.k_per_channel,
            weights: self.aggregator,
            relevance_target: self.generation.relevance_target,
            support_threshold: self.generation.support_threshold,
            variant: self.generation.variant,
        }
    }

    pub fn kg_config(&self) -> KgBuildConfig {
        KgBuildConfig {
            relations: RelationVocabulary::new(self.kg.relations.iter().cloned()).with_self_loops(self.kg.allow_self_loops),
            normalization_candidates: self.normalization.candidates,
            merge_threshold: self.normalization.merge_threshold,
            extract_meta: self.kg.extract_meta,
            rename_pass: self.normalization.rename_pass,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            gmap_epsilon: self.eval.gmap_epsilon,
            judge: self.eval.judge,
            judge_mapping: self.eval.judge_mapping,
            doc_cut: self.eval.doc_cut,
        }
    }

    /// Everything that affects results, without filesystem locations, so
    /// the snapshot is stable across machines and output directories.
    pub fn snapshot(&self, mock_script_digest: Option<String>) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("paths");
            obj.insert("mock_script_fnv1a64".into(), mock_script_digest.into());
            if let Some(kg) = obj.get_mut("kg").and_then(|k| k.as_object_mut()) {
                if let Some(lex) = kg.get_mut("lexicons").and_then(|l| l.as_array_mut()) {
                    for l in lex.iter_mut().filter_map(|l| l.as_object_mut()) {
                        if let Some(p) = l.get("path").and_then(|p| p.as_str()) {
                            let name = Path::new(p).file_name().map(|n| n.to_string_lossy().into_owned());
                            l.insert("path".into(), name.into());
                        }
                    }
                }
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = EngineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(EngineConfig::parse(&text).unwrap(), cfg);
        assert_eq!(EngineConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = EngineConfig::parse("[retrieval]\nk = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        assert!(EngineConfig::parse("[bogus]\n").is_err());
    }

    #[test]
    fn knobs_are_validated() {
        assert!(EngineConfig::parse("[retrieval]\nk_per_channel = 0\n").is_err());
        assert!(EngineConfig::parse("[generation]\nsupport_threshold = 101\n").is_err());
        assert!(EngineConfig::parse("[aggregator]\nw_s = -1.0\nw_m = 3.0\nw_r = 1.0\n").is_err());
        assert!(EngineConfig::parse("[chunking]\ntarget_words = 50\noverlap_words = 50\nparagraph_aligned = true\n").is_err());
        assert!(EngineConfig::parse("[normalization]\nmerge_threshold = 1.5\n").is_err());
        assert!(EngineConfig::parse("[generation.variant]\nkind = \"without_progressive_generation\"\ntop_n = 0\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = EngineConfig::parse(
            r#"
[paths]
corpus = "c"
mock_script = "s.jsonl"

[generation.variant]
kind = "without_integrated_retrieval"
top_n = 50

[providers.embedding]
kind = "http"
base_url = "http://localhost:8080/v1"
model = "embed"
dims = 1024

[providers.endpoints.reasoner]
base_url = "http://localhost:8080/v1"
model = "chat"

[[kg.lexicons]]
path = "lex/diseases.tsv"
types = ["Disease", "Drug"]

[eval]
judge = "exact_match"
doc_cut = { kind = "top_candidates", n = 10 }
"#,
        )
        .unwrap();
        assert_eq!(cfg.generation.variant, PipelineVariant::WithoutIntegratedRetrieval { top_n: 50 });
        assert_eq!(cfg.providers.endpoints.reasoner.as_ref().unwrap().api_key_env, DEFAULT_LLM_KEY_ENV);
        assert_eq!(cfg.eval.doc_cut, DocCut::TopCandidates { n: 10 });
        let mut resolved = cfg.clone();
        resolved.resolve_paths(Path::new("/base"));
        assert_eq!(resolved.paths.corpus, Path::new("/base/c"));
        assert_eq!(resolved.kg.lexicons[0].path, Path::new("/base/lex/diseases.tsv"));
        let snap = resolved.snapshot(None);
        assert!(snap.get("paths").is_none());
        assert_eq!(snap["kg"]["lexicons"][0]["path"], "diseases.tsv");
    }
}
