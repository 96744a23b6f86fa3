//! Progressive answer generation and the end-to-end pipeline.
//!
//! After aggregation the ranked candidates are screened one at a time until
//! `relevance_target` relevant chunks are found. If the list runs out first,
//! whatever was judged relevant is used; if nothing was, the top
//! `relevance_target` candidates by score are used regardless of verdicts.
//! A single draft is written over the selection, each selected chunk gets a
//! 0-100 support score against that draft, and the deep thinker writes the
//! final answer from the question plus the chunks scoring at or above
//! `support_threshold` (all selected chunks if none do).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Corpus};
use crate::index::{vector_search, Channel, IndexSet, RetrievalHit};
use crate::providers::templates::{CLOSED_BOOK, DEEP_THINK, DRAFT_ANSWER, RELEVANCE_CHECK, SELF_REFLECT};
use crate::providers::{CallError, CallRecord, PromptTemplates, ProviderHub, Role, Session};
use crate::retrieval::{
    aggregate, multi_channel_retrieve, pre_retrieval_reason, AggregatedCandidate, AggregatorWeights, PreRetrievalOutput,
    RetrievalError,
};
use crate::text::extract_json;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("relevance target must be positive")]
    ZeroTarget,
    #[error("no chunks selected")]
    EmptySelection,
    #[error("draft answer is empty")]
    EmptyDraft,
    #[error("support threshold {0} is outside 0..=100")]
    InvalidThreshold(u32),
    #[error("unknown chunk {0}")]
    UnknownChunk(String),
    #[error("support scores do not cover selected chunk {0}")]
    MissingSupport(String),
    #[error(transparent)]
    Call(#[from] CallError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceVerdict {
    pub chunk_id: String,
    pub relevant: bool,
    pub rationale: String,
}

/// Reads `RELEVANT`/`IRRELEVANT` (case-insensitive, optional leading
/// punctuation) from the start of a reply; the rest is the rationale.
pub fn parse_verdict(reply: &str) -> Result<(bool, String), String> {
    let trimmed = reply.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '"' | '`' | '['));
    let upper = trimmed.to_uppercase();
    let (relevant, len) = if upper.starts_with("IRRELEVANT") {
        (false, "IRRELEVANT".len())
    } else if upper.starts_with("NOT RELEVANT") {
        (false, "NOT RELEVANT".len())
    } else if upper.starts_with("RELEVANT") {
        (true, "RELEVANT".len())
    } else {
        return Err("reply must start with RELEVANT or IRRELEVANT".into());
    };
    let rationale = trimmed[len..]
        .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '-' | '.' | '*' | ']' | '"' | '`' | ','))
        .trim()
        .to_string();
    Ok((relevant, rationale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub selected: Vec<String>,
    pub verdicts: Vec<RelevanceVerdict>,
    /// True when no candidate was judged relevant and the top candidates by
    /// score were taken instead.
    pub fallback: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("relevance scan failed after {} verdict(s): {source}", verdicts.len())]
pub struct ScanError {
    pub verdicts: Vec<RelevanceVerdict>,
    #[source]
    pub source: GenerationError,
}

/// The scan rule with the verdict source abstracted out. `judge` is called in
/// rank order and never past the candidate that completes the target.
pub fn relevance_scan_with<F>(candidates: &[AggregatedCandidate], target: usize, mut judge: F) -> Result<ScanOutcome, ScanError>
where
    F: FnMut(&AggregatedCandidate) -> Result<RelevanceVerdict, GenerationError>,
{
    if target == 0 {
        return Err(ScanError {
            verdicts: vec![],
            source: GenerationError::ZeroTarget,
        });
    }
    let mut verdicts = Vec::new();
    let mut selected = Vec::new();
    for c in candidates {
        match judge(c) {
            Ok(v) => {
                if v.relevant {
                    selected.push(c.chunk_id.clone());
                }
                verdicts.push(v);
            }
            Err(source) => return Err(ScanError { verdicts, source }),
        }
        if selected.len() == target {
            break;
        }
    }
    let fallback = selected.is_empty();
    if fallback {
        selected = candidates.iter().take(target).map(|c| c.chunk_id.clone()).collect();
    }
    Ok(ScanOutcome {
        selected,
        verdicts,
        fallback,
    })
}

fn relevance_key(question: &str, chunk_id: &str) -> String {
    format!("{question} | {chunk_id}")
}

/// Screens candidates with the reasoner. Scripted-backend key:
/// `"<question> | <chunk_id>"`.
pub fn relevance_scan(
    candidates: &[AggregatedCandidate],
    question: &str,
    corpus: &Corpus,
    session: &Session<'_>,
    target: usize,
) -> Result<ScanOutcome, ScanError> {
    relevance_scan_with(candidates, target, |c| {
        let chunk = corpus
            .chunk(&c.chunk_id)
            .ok_or_else(|| GenerationError::UnknownChunk(c.chunk_id.clone()))?;
        let (relevant, rationale) = session.call_parsed(
            Role::Reasoner,
            RELEVANCE_CHECK,
            &relevance_key(question, &c.chunk_id),
            &[("question", question), ("chunk_id", &c.chunk_id), ("chunk_text", &chunk.text)],
            parse_verdict,
        )?;
        Ok(RelevanceVerdict {
            chunk_id: c.chunk_id.clone(),
            relevant,
            rationale,
        })
    })
}

/// Numbered context blocks in the given order: `[n] (chunk_id)` then the text.
pub fn context_blocks(chunks: &[&Chunk]) -> String {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] ({})\n{}", i + 1, c.chunk_id, c.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One draft over all selected chunks. Scripted-backend key: the question.
pub fn draft_answer(question: &str, chunks: &[&Chunk], session: &Session<'_>) -> Result<String, GenerationError> {
    if chunks.is_empty() {
        return Err(GenerationError::EmptySelection);
    }
    let context = context_blocks(chunks);
    let draft = session.call(Role::Reasoner, DRAFT_ANSWER, question, &[("question", question), ("context", &context)])?;
    Ok(draft.trim().to_string())
}

/// Parses per-chunk support scores: a JSON object (optionally under `"scores"`)
/// or `id: score` lines. Every expected id must be present with an integer in
/// 0..=100.
pub fn parse_support(reply: &str, expected: &[&str]) -> Result<Vec<(String, u8)>, String> {
    let mut found: BTreeMap<String, i64> = BTreeMap::new();
    let parse_num = |v: &serde_json::Value| -> Result<i64, String> {
        match v {
            serde_json::Value::Number(n) => n
                .as_i64()
                .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
                .ok_or_else(|| format!("score {n} is not an integer")),
            serde_json::Value::String(s) => s.trim().parse().map_err(|_| format!("score {s:?} is not an integer")),
            other => Err(format!("score {other} is not an integer")),
        }
    };
    if let Some(json) = extract_json(reply, '{', '}') {
        let value: serde_json::Value = serde_json::from_str(json).map_err(|e| format!("bad JSON: {e}"))?;
        let map = value.get("scores").unwrap_or(&value);
        let obj = map.as_object().ok_or("scores must be an object")?;
        for (k, v) in obj {
            found.insert(k.trim().to_string(), parse_num(v)?);
        }
    } else {
        for line in reply.lines() {
            if let Some((k, v)) = line.rsplit_once(':') {
                let k = k.trim().trim_matches(|c| matches!(c, '[' | ']' | '-' | '*' | ' '));
                let v: i64 = v.trim().parse().map_err(|_| format!("score {:?} is not an integer", v.trim()))?;
                found.insert(k.to_string(), v);
            }
        }
    }
    expected
        .iter()
        .map(|id| {
            let score = *found.get(*id).ok_or_else(|| format!("no score for {id}"))?;
            if !(0..=100).contains(&score) {
                return Err(format!("score {score} for {id} is outside 0..=100"));
            }
            Ok((id.to_string(), score as u8))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSupport {
    pub chunk_id: String,
    pub score: u8,
}

/// Scores how strongly each selected chunk supports the draft.
/// Scripted-backend key: the question.
pub fn self_reflect(question: &str, draft: &str, chunks: &[&Chunk], session: &Session<'_>) -> Result<Vec<ChunkSupport>, GenerationError> {
    if draft.trim().is_empty() {
        return Err(GenerationError::EmptyDraft);
    }
    if chunks.is_empty() {
        return Err(GenerationError::EmptySelection);
    }
    let ids: Vec<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    let context = context_blocks(chunks);
    let scores = session.call_parsed(
        Role::Reasoner,
        SELF_REFLECT,
        question,
        &[("question", question), ("draft", draft), ("context", &context), ("example_id", ids[0])],
        |reply| parse_support(reply, &ids),
    )?;
    Ok(scores
        .into_iter()
        .map(|(chunk_id, score)| ChunkSupport { chunk_id, score })
        .collect())
}

/// Chunks admitted to deep thinking: score >= threshold, ordered by score
/// descending then chunk id; every selected chunk if none qualify.
pub fn admitted_chunks(support: &[ChunkSupport], threshold: u32) -> Vec<String> {
    let mut passed: Vec<&ChunkSupport> = support.iter().filter(|s| u32::from(s.score) >= threshold).collect();
    if passed.is_empty() {
        passed = support.iter().collect();
    }
    passed.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
    passed.into_iter().map(|s| s.chunk_id.clone()).collect()
}

/// Final synthesis by the deep thinker over the admitted chunks (the draft is
/// not shown to it). Scripted-backend key: the question.
pub fn deep_think(
    question: &str,
    chunks: &[&Chunk],
    support: &[ChunkSupport],
    threshold: u32,
    session: &Session<'_>,
) -> Result<(String, Vec<String>), GenerationError> {
    if threshold > 100 {
        return Err(GenerationError::InvalidThreshold(threshold));
    }
    if chunks.is_empty() {
        return Err(GenerationError::EmptySelection);
    }
    if let Some(c) = chunks.iter().find(|c| !support.iter().any(|s| s.chunk_id == c.chunk_id)) {
        return Err(GenerationError::MissingSupport(c.chunk_id.clone()));
    }
    let passed = admitted_chunks(support, threshold);
    let ordered: Vec<&Chunk> = passed
        .iter()
        .map(|id| {
            chunks
                .iter()
                .find(|c| &c.chunk_id == id)
                .copied()
                .ok_or_else(|| GenerationError::UnknownChunk(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let context = context_blocks(&ordered);
    let answer = session.call(Role::DeepThinker, DEEP_THINK, question, &[("question", question), ("context", &context)])?;
    Ok((answer.trim().to_string(), passed))
}

/// Which parts of the pipeline run. `Full` is the complete system; the others
/// remove one component for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineVariant {
    #[default]
    Full,
    /// Skip pre-retrieval reasoning and the channel fan-out: rank the top
    /// `top_n` full-text chunks by question similarity, then generate as usual.
    WithoutIntegratedRetrieval { top_n: usize },
    /// Keep retrieval, but answer directly from the top `top_n` aggregated
    /// chunks with a single draft.
    WithoutProgressiveGeneration { top_n: usize },
    /// Answer from the question alone.
    WithoutRetrieval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub k_per_channel: usize,
    pub weights: AggregatorWeights,
    pub relevance_target: usize,
    pub support_threshold: u32,
    #[serde(default)]
    pub variant: PipelineVariant,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            k_per_channel: 10,
            weights: AggregatorWeights::default(),
            relevance_target: 5,
            support_threshold: 50,
            variant: PipelineVariant::Full,
        }
    }
}

/// Everything one question went through, in order. Serializes to the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub schema_version: u32,
    pub question: String,
    pub variant: PipelineVariant,
    pub pre: Option<PreRetrievalOutput>,
    pub hits: Vec<RetrievalHit>,
    pub candidates: Vec<AggregatedCandidate>,
    pub verdicts: Vec<RelevanceVerdict>,
    pub selection_fallback: bool,
    pub selected: Vec<String>,
    pub draft: Option<String>,
    pub support: Vec<ChunkSupport>,
    pub final_support_chunk_ids: Vec<String>,
    pub final_answer: Option<String>,
    pub calls: Vec<CallRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl AnswerTrace {
    fn new(question: &str, variant: PipelineVariant) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            question: question.to_string(),
            variant,
            pre: None,
            hits: vec![],
            candidates: vec![],
            verdicts: vec![],
            selection_fallback: false,
            selected: vec![],
            draft: None,
            support: vec![],
            final_support_chunk_ids: vec![],
            final_answer: None,
            calls: vec![],
            config: None,
        }
    }

    /// Distinct documents of the selected chunks, in selection order.
    pub fn selected_docs(&self) -> Vec<String> {
        let mut docs: Vec<String> = Vec::new();
        for id in &self.selected {
            if let Some(c) = self.candidates.iter().find(|c| &c.chunk_id == id) {
                if !docs.contains(&c.doc_id) {
                    docs.push(c.doc_id.clone());
                }
            }
        }
        docs
    }

    /// Distinct documents of the top `n` aggregated candidates, in rank order.
    pub fn top_candidate_docs(&self, n: usize) -> Vec<String> {
        let mut docs: Vec<String> = Vec::new();
        for c in self.candidates.iter().take(n) {
            if !docs.contains(&c.doc_id) {
                docs.push(c.doc_id.clone());
            }
        }
        docs
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
    /// Everything recorded before the failure.
    pub trace: Box<AnswerTrace>,
}

/// A ready-to-query corpus, its indexes and the providers.
#[derive(Debug)]
pub struct Engine {
    pub corpus: Corpus,
    pub indexes: IndexSet,
    pub hub: ProviderHub,
    pub templates: PromptTemplates,
    pub config: GenerationConfig,
}

impl Engine {
    pub fn new(corpus: Corpus, indexes: IndexSet, hub: ProviderHub, templates: PromptTemplates, config: GenerationConfig) -> Self {
        Self {
            corpus,
            indexes,
            hub,
            templates,
            config,
        }
    }

    fn chunks(&self, ids: &[String]) -> Result<Vec<&Chunk>, GenerationError> {
        ids.iter()
            .map(|id| self.corpus.chunk(id).ok_or_else(|| GenerationError::UnknownChunk(id.clone())))
            .collect()
    }

    /// Runs the whole pipeline for one question. On failure the error carries
    /// the partial trace.
    pub fn answer(&self, question: &str) -> Result<AnswerTrace, PipelineError> {
        let session = Session::new(&self.hub, &self.templates);
        let mut trace = AnswerTrace::new(question, self.config.variant);
        let result = self.run(question, &session, &mut trace);
        trace.calls = session.take_records();
        match result {
            Ok(()) => Ok(trace),
            Err((stage, message)) => Err(PipelineError {
                stage,
                message,
                trace: Box::new(trace),
            }),
        }
    }

    fn run(&self, question: &str, session: &Session<'_>, trace: &mut AnswerTrace) -> Result<(), (&'static str, String)> {
        let cfg = &self.config;
        let fail = |stage: &'static str| move |e: &dyn std::fmt::Display| (stage, e.to_string());
        if question.trim().is_empty() {
            return Err(fail("pre_retrieval")(&RetrievalError::EmptyQuestion));
        }

        match cfg.variant {
            PipelineVariant::WithoutRetrieval => {
                let answer = session
                    .call(Role::Reasoner, CLOSED_BOOK, question, &[("question", question)])
                    .map_err(|e| fail("closed_book")(&e))?;
                trace.final_answer = Some(answer.trim().to_string());
                return Ok(());
            }
            PipelineVariant::WithoutIntegratedRetrieval { top_n } => {
                let hits = vector_search(
                    &self.indexes.fulltext_vectors,
                    question,
                    top_n.max(1),
                    self.hub.embedder(),
                    Channel::QuestionFullText,
                )
                .map_err(|e| fail("retrieval")(&e))?;
                trace.candidates = hits
                    .iter()
                    .map(|h| AggregatedCandidate {
                        chunk_id: h.chunk_id.clone(),
                        doc_id: h.doc_id.clone(),
                        s_sim: h.similarity,
                        m: 1,
                        r: 1,
                        channels: vec![h.channel],
                        score: h.similarity,
                    })
                    .collect();
                trace.hits = hits;
            }
            PipelineVariant::Full | PipelineVariant::WithoutProgressiveGeneration { .. } => {
                let pre = pre_retrieval_reason(question, session).map_err(|e| fail("pre_retrieval")(&e))?;
                trace.pre = Some(pre.clone());
                trace.hits = multi_channel_retrieve(question, &pre, &self.indexes, self.hub.embedder(), cfg.k_per_channel)
                    .map_err(|e| fail("retrieval")(&e))?;
                trace.candidates = aggregate(&trace.hits, &cfg.weights).map_err(|e| fail("aggregate")(&e))?;
            }
        }

        if let PipelineVariant::WithoutProgressiveGeneration { top_n } = cfg.variant {
            trace.selected = trace.candidates.iter().take(top_n.max(1)).map(|c| c.chunk_id.clone()).collect();
            let chunks = self.chunks(&trace.selected).map_err(|e| fail("draft")(&e))?;
            let draft = draft_answer(question, &chunks, session).map_err(|e| fail("draft")(&e))?;
            trace.final_support_chunk_ids = trace.selected.clone();
            trace.final_answer = Some(draft.clone());
            trace.draft = Some(draft);
            return Ok(());
        }

        let scan = relevance_scan(&trace.candidates, question, &self.corpus, session, cfg.relevance_target);
        let scan = match scan {
            Ok(s) => s,
            Err(e) => {
                let message = e.to_string();
                trace.verdicts = e.verdicts;
                return Err(("relevance_scan", message));
            }
        };
        trace.verdicts = scan.verdicts;
        trace.selected = scan.selected;
        trace.selection_fallback = scan.fallback;

        let chunks = self.chunks(&trace.selected).map_err(|e| fail("draft")(&e))?;
        let draft = draft_answer(question, &chunks, session).map_err(|e| fail("draft")(&e))?;
        trace.draft = Some(draft.clone());
        trace.support = self_reflect(question, &draft, &chunks, session).map_err(|e| fail("self_reflect")(&e))?;
        let (answer, passed) =
            deep_think(question, &chunks, &trace.support, cfg.support_threshold, session).map_err(|e| fail("deep_think")(&e))?;
        trace.final_answer = Some(answer);
        trace.final_support_chunk_ids = passed;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{ChunkLevel, ChunkPolicy, Document};
    use crate::providers::{HashingEmbedder, ProviderScript, ScriptEntry};

    fn cand(id: &str, score: f64) -> AggregatedCandidate {
        AggregatedCandidate {
            chunk_id: id.into(),
            doc_id: id.into(),
            s_sim: 0.5,
            m: 1,
            r: 1,
            channels: vec![Channel::QuestionAbstract],
            score,
        }
    }

    fn cands(n: usize) -> Vec<AggregatedCandidate> {
        (0..n).map(|i| cand(&format!("c{}", i + 1), 10.0 - i as f64)).collect()
    }

    fn scripted_scan(n: usize, relevant_ranks: &[usize], target: usize) -> (ScanOutcome, usize) {
        let calls = Cell::new(0);
        let list = cands(n);
        let out = relevance_scan_with(&list, target, |c| {
            calls.set(calls.get() + 1);
            let rank: usize = c.chunk_id[1..].parse().unwrap();
            Ok(RelevanceVerdict {
                chunk_id: c.chunk_id.clone(),
                relevant: relevant_ranks.contains(&rank),
                rationale: String::new(),
            })
        })
        .unwrap();
        (out, calls.get())
    }

    #[test]
    fn stops_at_fifth_relevant() {
        let (out, calls) = scripted_scan(8, &[1, 2, 3, 5, 6], 5);
        assert_eq!(out.selected, vec!["c1", "c2", "c3", "c5", "c6"]);
        assert_eq!(calls, 6);
        assert!(!out.fallback);
    }

    #[test]
    fn partial_selection_when_list_runs_out() {
        let (out, calls) = scripted_scan(4, &[2, 4], 5);
        assert_eq!(out.selected, vec!["c2", "c4"]);
        assert_eq!(calls, 4);
    }

    #[test]
    fn zero_relevant_falls_back_to_top_by_score() {
        let (out, calls) = scripted_scan(9, &[], 5);
        assert_eq!(out.selected, vec!["c1", "c2", "c3", "c4", "c5"]);
        assert!(out.fallback);
        assert_eq!(calls, 9);
    }

    #[test]
    fn scan_error_keeps_partial_verdicts() {
        let list = cands(5);
        let err = relevance_scan_with(&list, 5, |c| {
            if c.chunk_id == "c3" {
                Err(GenerationError::EmptySelection)
            } else {
                Ok(RelevanceVerdict {
                    chunk_id: c.chunk_id.clone(),
                    relevant: true,
                    rationale: String::new(),
                })
            }
        })
        .unwrap_err();
        assert_eq!(err.verdicts.len(), 2);
        assert!(relevance_scan_with(&list, 0, |_| unreachable!()).is_err());
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("RELEVANT: names the drug").unwrap(), (true, "names the drug".into()));
        assert_eq!(parse_verdict("**Irrelevant** - off topic").unwrap(), (false, "off topic".into()));
        assert_eq!(parse_verdict("relevant").unwrap(), (true, String::new()));
        assert!(!parse_verdict("Not relevant.").unwrap().0);
        assert!(parse_verdict("Maybe").is_err());
    }

    #[test]
    fn support_parsing() {
        assert_eq!(
            parse_support(r#"{"scores": {"c1": 90, "c2": 10}}"#, &["c1", "c2"]).unwrap(),
            vec![("c1".to_string(), 90), ("c2".to_string(), 10)]
        );
        assert_eq!(parse_support("c1: 90\nc2: 10", &["c2"]).unwrap(), vec![("c2".to_string(), 10)]);
        assert!(parse_support(r#"{"c1": 105}"#, &["c1"]).is_err());
        assert!(parse_support(r#"{"c1": 90}"#, &["c1", "c2"]).is_err());
        assert!(parse_support(r#"{"c1": 90.5}"#, &["c1"]).is_err());
    }

    #[test]
    fn threshold_admission() {
        let s = |id: &str, score| ChunkSupport {
            chunk_id: id.into(),
            score,
        };
        assert_eq!(admitted_chunks(&[s("c1", 90), s("c2", 40), s("c3", 70)], 50), vec!["c1", "c3"]);
        assert_eq!(admitted_chunks(&[s("c2", 0), s("c1", 0)], 50), vec!["c1", "c2"]);
        assert_eq!(admitted_chunks(&[s("b", 50), s("a", 50)], 50), vec!["a", "b"]);
    }

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: "D".into(),
            level: ChunkLevel::FullText,
            text: text.into(),
            ordinal: 0,
        }
    }

    fn entry(role: Role, template: &str, key: &str, response: &str) -> ScriptEntry {
        ScriptEntry {
            role,
            template_id: template.into(),
            key: key.into(),
            response: response.into(),
        }
    }

    fn hub(entries: Vec<ScriptEntry>) -> ProviderHub {
        ProviderHub::scripted(ProviderScript::from_entries(entries).unwrap(), Arc::new(HashingEmbedder::new(16)))
    }

    #[test]
    fn draft_prompt_contains_each_chunk_once_in_order() {
        let hub = hub(vec![entry(Role::Reasoner, DRAFT_ANSWER, "Q", "Answer: X")]);
        let t = PromptTemplates::default();
        let s = Session::new(&hub, &t);
        let c1 = chunk("c1", "alpha text");
        let c2 = chunk("c2", "beta text");
        assert_eq!(draft_answer("Q", &[&c1], &s).unwrap(), "Answer: X");
        let user = &s.take_records()[0].prompt.user;
        assert_eq!(user.matches("alpha text").count(), 1);
        draft_answer("Q", &[&c2, &c1], &s).unwrap();
        let user = &s.take_records()[0].prompt.user;
        assert!(user.find("[1] (c2)").unwrap() < user.find("[2] (c1)").unwrap());
        assert!(matches!(draft_answer("Q", &[], &s), Err(GenerationError::EmptySelection)));
    }

    #[test]
    fn self_reflect_scores_and_range_retry() {
        let hub = hub(vec![
            entry(Role::Reasoner, SELF_REFLECT, "Q", r#"{"scores":{"c1":90,"c2":10}}"#),
            entry(Role::Reasoner, SELF_REFLECT, "Q-bad", r#"{"scores":{"c1":105}}"#),
        ]);
        let t = PromptTemplates::default();
        let s = Session::new(&hub, &t);
        let (c1, c2) = (chunk("c1", "a"), chunk("c2", "b"));
        let out = self_reflect("Q", "draft", &[&c1, &c2], &s).unwrap();
        assert_eq!(
            out,
            vec![
                ChunkSupport { chunk_id: "c1".into(), score: 90 },
                ChunkSupport { chunk_id: "c2".into(), score: 10 }
            ]
        );
        s.take_records();
        assert!(matches!(
            self_reflect("Q-bad", "draft", &[&c1], &s),
            Err(GenerationError::Call(CallError::Malformed { .. }))
        ));
        assert_eq!(s.take_records().len(), 2);
    }

    #[test]
    fn deep_think_passes_admitted_chunks_by_score() {
        let hub = hub(vec![entry(Role::DeepThinker, DEEP_THINK, "Q", "Final: Y")]);
        let t = PromptTemplates::default();
        let s = Session::new(&hub, &t);
        let (c1, c2, c3) = (chunk("c1", "one"), chunk("c2", "two"), chunk("c3", "three"));
        let support = vec![
            ChunkSupport { chunk_id: "c1".into(), score: 90 },
            ChunkSupport { chunk_id: "c2".into(), score: 40 },
            ChunkSupport { chunk_id: "c3".into(), score: 70 },
        ];
        let (answer, passed) = deep_think("Q", &[&c1, &c2, &c3], &support, 50, &s).unwrap();
        assert_eq!(answer, "Final: Y");
        assert_eq!(passed, vec!["c1", "c3"]);
        let user = &s.take_records()[0].prompt.user;
        assert!(!user.contains("two"));
        assert!(user.find("one").unwrap() < user.find("three").unwrap());
        assert!(matches!(
            deep_think("Q", &[&c1], &[], 50, &s),
            Err(GenerationError::MissingSupport(_))
        ));
    }

    fn engine(entries: Vec<ScriptEntry>, variant: PipelineVariant) -> Engine {
        let docs = vec![
            Document {
                doc_id: "D1".into(),
                title: "Cisplatin".into(),
                abstract_text: "Cisplatin resistance in ovarian cancer is driven by DNA repair.".into(),
                body: "Ovarian cancer cells acquire cisplatin resistance through enhanced DNA repair.".into(),
                year: None,
                keywords: vec![],
                cited_doc_ids: vec![],
            },
            Document {
                doc_id: "D2".into(),
                title: "Birds".into(),
                abstract_text: "Arctic terns migrate between the poles every year.".into(),
                body: "Tern migration routes span both hemispheres.".into(),
                year: None,
                keywords: vec![],
                cited_doc_ids: vec![],
            },
        ];
        let corpus = Corpus::build(docs, ChunkPolicy::default()).unwrap();
        let hub = hub(entries);
        let indexes = IndexSet::build(&corpus, hub.embedder()).unwrap();
        let config = GenerationConfig {
            variant,
            ..GenerationConfig::default()
        };
        Engine::new(corpus, indexes, hub, PromptTemplates::default(), config)
    }

    const Q: &str = "How does ovarian cancer become resistant to cisplatin?";

    fn full_script() -> Vec<ScriptEntry> {
        vec![
            entry(
                Role::Reasoner,
                crate::providers::templates::PRE_RETRIEVAL,
                Q,
                r#"{"keywords":["cisplatin","ovarian cancer"],"synonyms":{"cisplatin":["CDDP"]},"virtual_answer":"Cisplatin resistance in ovarian cancer arises from enhanced DNA repair."}"#,
            ),
            entry(Role::Reasoner, RELEVANCE_CHECK, &format!("{Q} | D1::abs"), "RELEVANT: direct answer"),
            entry(Role::Reasoner, RELEVANCE_CHECK, &format!("{Q} | D1::ft0000"), "RELEVANT: mechanism"),
            entry(Role::Reasoner, RELEVANCE_CHECK, "*", "IRRELEVANT: off topic"),
            entry(Role::Reasoner, DRAFT_ANSWER, Q, "Draft: DNA repair."),
            entry(Role::Reasoner, SELF_REFLECT, Q, r#"{"D1::abs": 95, "D1::ft0000": 60}"#),
            entry(Role::DeepThinker, DEEP_THINK, Q, "Final: enhanced DNA repair drives resistance."),
            entry(Role::Reasoner, CLOSED_BOOK, Q, "Closed-book guess."),
        ]
    }

    #[test]
    fn end_to_end_trace() {
        let e = engine(full_script(), PipelineVariant::Full);
        let trace = e.answer(Q).unwrap();
        assert_eq!(trace.final_answer.as_deref(), Some("Final: enhanced DNA repair drives resistance."));
        let mut selected = trace.selected.clone();
        selected.sort();
        assert_eq!(selected, vec!["D1::abs", "D1::ft0000"]);
        assert_eq!(trace.selected_docs(), vec!["D1"]);
        assert_eq!(trace.final_support_chunk_ids, vec!["D1::abs", "D1::ft0000"]);
        assert!(trace.final_support_chunk_ids.iter().all(|id| trace.selected.contains(id)));
        assert!(trace.selected.iter().all(|id| trace.verdicts.iter().any(|v| &v.chunk_id == id)));
        // Every chunk text quoted in any prompt is a chunk named in the trace.
        for call in &trace.calls {
            for c in e.corpus.chunks() {
                if call.prompt.user.contains(&c.text) {
                    assert!(trace.candidates.iter().any(|x| x.chunk_id == c.chunk_id));
                }
            }
        }
        let again = e.answer(Q).unwrap();
        assert_eq!(serde_json::to_string(&trace).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn failure_carries_partial_trace() {
        let mut script = full_script();
        script.retain(|e| e.template_id != DEEP_THINK);
        let e = engine(script, PipelineVariant::Full);
        let err = e.answer(Q).unwrap_err();
        assert_eq!(err.stage, "deep_think");
        assert!(err.trace.draft.is_some());
        assert_eq!(err.trace.support.len(), 2);
        assert!(err.trace.final_answer.is_none());
        assert!(err.trace.calls.last().unwrap().error.is_some());
    }

    #[test]
    fn ablation_variants() {
        let e = engine(full_script(), PipelineVariant::WithoutRetrieval);
        let t = e.answer(Q).unwrap();
        assert_eq!(t.final_answer.as_deref(), Some("Closed-book guess."));
        assert!(t.candidates.is_empty());

        let e = engine(full_script(), PipelineVariant::WithoutProgressiveGeneration { top_n: 2 });
        let t = e.answer(Q).unwrap();
        assert_eq!(t.selected.len(), 2);
        assert_eq!(t.final_answer.as_deref(), Some("Draft: DNA repair."));
        assert!(t.verdicts.is_empty());

        let e = engine(full_script(), PipelineVariant::WithoutIntegratedRetrieval { top_n: 50 });
        let t = e.answer(Q).unwrap();
        assert!(t.pre.is_none());
        assert!(t.candidates.iter().all(|c| c.channels == vec![Channel::QuestionFullText]));
        assert_eq!(t.selected, vec!["D1::ft0000"]);
    }
}
