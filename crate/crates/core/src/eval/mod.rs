//! Retrieval and answer metrics, LLM judging, and the evaluation harness.

mod judge;
mod metrics;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generation::{AnswerTrace, Engine};
use crate::index::Channel;
use crate::providers::{CallError, Session};

pub use judge::{llm_judge, parse_exact_match, parse_five_point, FivePointMapping, JudgeMode};
pub use metrics::{
    ap, default_matcher, doc_prf, factoid_score, list_prf, map_gmap, rr, split_answer_list, yes_no_metrics, FactoidScore,
    Prf, YesNo, YesNoMetrics, FACTOID_CUTOFF,
};
pub use table::render_table;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("judge is disabled")]
    JudgeDisabled,
    #[error("duplicate question id {0}")]
    DuplicateId(String),
    #[error("question {id}: {message}")]
    TypeMismatch { id: String, message: String },
    #[error("dataset {path}: {message}")]
    Dataset { path: String, message: String },
    #[error(transparent)]
    Call(#[from] CallError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String")]
pub enum QuestionType {
    Factual,
    Extraction,
    Discovery,
    YesNo,
    Factoid,
    List,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::Factual,
        QuestionType::Extraction,
        QuestionType::Discovery,
        QuestionType::YesNo,
        QuestionType::Factoid,
        QuestionType::List,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::Factual => "factual",
            QuestionType::Extraction => "extraction",
            QuestionType::Discovery => "discovery",
            QuestionType::YesNo => "yes_no",
            QuestionType::Factoid => "factoid",
            QuestionType::List => "list",
        }
    }
}

impl TryFrom<String> for QuestionType {
    type Error = String;

    /// Case-insensitive; `YesNo`, `yesno` and `yes_no` are all accepted.
    fn try_from(s: String) -> Result<Self, Self::Error> {
        let folded: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        QuestionType::ALL
            .into_iter()
            .find(|t| t.as_str().replace('_', "") == folded)
            .ok_or_else(|| format!("unknown question type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldAnswer {
    Text(String),
    List(Vec<String>),
}

impl GoldAnswer {
    pub fn as_text(&self) -> String {
        match self {
            GoldAnswer::Text(t) => t.clone(),
            GoldAnswer::List(items) => items.join("; "),
        }
    }

    /// List items; a text answer is split like a predicted answer.
    pub fn items(&self) -> Vec<String> {
        match self {
            GoldAnswer::Text(t) => split_answer_list(t),
            GoldAnswer::List(items) => items.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(rename = "id")]
    pub question_id: String,
    pub question: String,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    pub gold_answer: GoldAnswer,
    #[serde(default)]
    pub gold_doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sentences: Option<Vec<String>>,
}

/// Reads a JSONL dataset. Blank lines are skipped; ids must be unique.
pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let records: Vec<EvalRecord> = crate::jsonl::read_lines(path).map_err(|e| EvalError::Dataset {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.question_id.as_str()) {
            return Err(EvalError::DuplicateId(r.question_id.clone()));
        }
    }
    Ok(records)
}

/// Which documents count as the system's retrieved set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DocCut {
    /// Documents of the chunks kept by the relevance scan, in selection order.
    #[default]
    Selected,
    /// Documents of the top `n` aggregated candidates, before generation.
    TopCandidates { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub gmap_epsilon: f64,
    pub judge: JudgeMode,
    pub judge_mapping: FivePointMapping,
    pub doc_cut: DocCut,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gmap_epsilon: 0.01,
            judge: JudgeMode::FivePoint,
            judge_mapping: FivePointMapping::FromFloor,
            doc_cut: DocCut::Selected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub rr: f64,
    /// Recall of the documents returned by each channel alone.
    pub channel_recall: BTreeMap<Channel, f64>,
    /// Recall of the documents returned by any channel.
    pub union_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub question_type: QuestionType,
    /// Pipeline or metric failure; the question still counts with zero scores.
    pub error: Option<String>,
    pub answer: Option<String>,
    pub predicted_docs: Vec<String>,
    /// Absent when the record has no gold documents.
    pub retrieval: Option<RetrievalScores>,
    pub judge_score: Option<f64>,
    pub judge_error: Option<String>,
    pub yes_no: Option<(Option<YesNo>, YesNo)>,
    pub factoid: Option<FactoidScore>,
    pub list: Option<Prf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FactoidMetrics {
    pub count: usize,
    pub strict_accuracy: f64,
    pub lenient_accuracy: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ListMetrics {
    pub count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub failures: usize,
    /// Questions with gold documents; retrieval means are over these.
    pub retrieval_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
    pub gmap: f64,
    pub mrr: f64,
    pub union_recall: f64,
    pub channel_recall: BTreeMap<Channel, f64>,
    pub judged: usize,
    pub judge_score: Option<f64>,
    pub yes_no: Option<YesNoMetrics>,
    pub factoid: Option<FactoidMetrics>,
    pub list: Option<ListMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub eval_config: EvalConfig,
    pub overall: Summary,
    pub by_type: BTreeMap<QuestionType, Summary>,
    pub questions: Vec<QuestionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn docs_of<'a>(hits: impl Iterator<Item = &'a crate::index::RetrievalHit>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for h in hits {
        if !out.contains(&h.doc_id) {
            out.push(h.doc_id.clone());
        }
    }
    out
}

fn retrieval_scores(trace: &AnswerTrace, predicted: &[String], gold: &[String]) -> Result<RetrievalScores, EvalError> {
    let prf = doc_prf(predicted, gold)?;
    let recall_of = |docs: Vec<String>| doc_prf(&docs, gold).map(|p| p.recall);
    let mut channel_recall = BTreeMap::new();
    for c in Channel::ALL {
        channel_recall.insert(c, recall_of(docs_of(trace.hits.iter().filter(|h| h.channel == c)))?);
    }
    Ok(RetrievalScores {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        ap: ap(predicted, gold)?,
        rr: rr(predicted, gold)?,
        channel_recall,
        union_recall: recall_of(docs_of(trace.hits.iter()))?,
    })
}

fn zero_retrieval() -> RetrievalScores {
    RetrievalScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        ap: 0.0,
        rr: 0.0,
        channel_recall: Channel::ALL.into_iter().map(|c| (c, 0.0)).collect(),
        union_recall: 0.0,
    }
}

fn gold_yes_no(record: &EvalRecord) -> Result<YesNo, EvalError> {
    YesNo::parse(&record.gold_answer.as_text()).ok_or_else(|| EvalError::TypeMismatch {
        id: record.question_id.clone(),
        message: "yes/no question needs a gold answer of yes or no".into(),
    })
}

fn gold_items(record: &EvalRecord) -> Result<Vec<String>, EvalError> {
    let items = record.gold_answer.items();
    if items.is_empty() {
        return Err(EvalError::TypeMismatch {
            id: record.question_id.clone(),
            message: format!("{} question needs at least one gold item", record.question_type.as_str()),
        });
    }
    Ok(items)
}

fn answer_metrics(record: &EvalRecord, answer: Option<&str>, out: &mut QuestionResult) -> Result<(), EvalError> {
    let predicted_items = answer.map(split_answer_list).unwrap_or_default();
    match record.question_type {
        QuestionType::YesNo => {
            out.yes_no = Some((answer.and_then(YesNo::parse), gold_yes_no(record)?));
        }
        QuestionType::Factoid => {
            out.factoid = Some(factoid_score(&predicted_items, &gold_items(record)?, &default_matcher)?);
        }
        QuestionType::List => {
            out.list = Some(list_prf(&predicted_items, &gold_items(record)?, &default_matcher)?);
        }
        QuestionType::Factual | QuestionType::Extraction | QuestionType::Discovery => {}
    }
    Ok(())
}

fn evaluate_one(record: &EvalRecord, engine: &Engine, config: &EvalConfig) -> QuestionResult {
    let mut out = QuestionResult {
        id: record.question_id.clone(),
        question_type: record.question_type,
        error: None,
        answer: None,
        predicted_docs: vec![],
        retrieval: None,
        judge_score: None,
        judge_error: None,
        yes_no: None,
        factoid: None,
        list: None,
    };
    let has_gold_docs = !record.gold_doc_ids.is_empty();
    let trace = match engine.answer(&record.question) {
        Ok(t) => t,
        Err(e) => {
            out.error = Some(e.to_string());
            if has_gold_docs {
                out.retrieval = Some(zero_retrieval());
            }
            if config.judge != JudgeMode::Off {
                out.judge_score = Some(0.0);
            }
            if let Err(e) = answer_metrics(record, None, &mut out) {
                out.error = Some(format!("{}; {e}", out.error.take().unwrap_or_default()));
            }
            return out;
        }
    };
    out.answer = trace.final_answer.clone();
    out.predicted_docs = match config.doc_cut {
        DocCut::Selected => trace.selected_docs(),
        DocCut::TopCandidates { n } => trace.top_candidate_docs(n),
    };
    if has_gold_docs {
        match retrieval_scores(&trace, &out.predicted_docs, &record.gold_doc_ids) {
            Ok(r) => out.retrieval = Some(r),
            Err(e) => out.error = Some(e.to_string()),
        }
    }
    let answer = out.answer.clone();
    if let Err(e) = answer_metrics(record, answer.as_deref(), &mut out) {
        out.error = Some(e.to_string());
    }
    if config.judge != JudgeMode::Off {
        let session = Session::new(&engine.hub, &engine.templates);
        match llm_judge(
            &record.question,
            &record.gold_answer.as_text(),
            out.answer.as_deref().unwrap_or_default(),
            config.judge,
            config.judge_mapping,
            &session,
        ) {
            Ok(s) => out.judge_score = Some(s),
            Err(e) => out.judge_error = Some(e.to_string()),
        }
    }
    out
}

pub fn summarize(results: &[&QuestionResult], epsilon: f64) -> Summary {
    let retrieval: Vec<&RetrievalScores> = results.iter().filter_map(|r| r.retrieval.as_ref()).collect();
    let aps: Vec<f64> = retrieval.iter().map(|r| r.ap).collect();
    let (map, gmap) = map_gmap(&aps, epsilon).unwrap_or((0.0, 0.0));
    let judged: Vec<f64> = results.iter().filter_map(|r| r.judge_score).collect();
    let yn: Vec<(Option<YesNo>, YesNo)> = results.iter().filter_map(|r| r.yes_no).collect();
    let factoid: Vec<FactoidScore> = results.iter().filter_map(|r| r.factoid).collect();
    let lists: Vec<Prf> = results.iter().filter_map(|r| r.list).collect();
    Summary {
        count: results.len(),
        failures: results.iter().filter(|r| r.error.is_some()).count(),
        retrieval_count: retrieval.len(),
        precision: mean(retrieval.iter().map(|r| r.precision)),
        recall: mean(retrieval.iter().map(|r| r.recall)),
        f1: mean(retrieval.iter().map(|r| r.f1)),
        map,
        gmap,
        mrr: mean(retrieval.iter().map(|r| r.rr)),
        union_recall: mean(retrieval.iter().map(|r| r.union_recall)),
        channel_recall: Channel::ALL
            .into_iter()
            .map(|c| (c, mean(retrieval.iter().map(|r| r.channel_recall[&c]))))
            .collect(),
        judged: judged.len(),
        judge_score: (!judged.is_empty()).then(|| mean(judged.iter().copied())),
        yes_no: yes_no_metrics(&yn).ok(),
        factoid: (!factoid.is_empty()).then(|| FactoidMetrics {
            count: factoid.len(),
            strict_accuracy: mean(factoid.iter().map(|f| f.strict)),
            lenient_accuracy: mean(factoid.iter().map(|f| f.lenient)),
            mrr: mean(factoid.iter().map(|f| f.rr)),
        }),
        list: (!lists.is_empty()).then(|| ListMetrics {
            count: lists.len(),
            precision: mean(lists.iter().map(|p| p.precision)),
            recall: mean(lists.iter().map(|p| p.recall)),
            f1: mean(lists.iter().map(|p| p.f1)),
        }),
    }
}

/// Answers every record and scores it. Records are evaluated in parallel;
/// the report lists them in dataset order.
pub fn run_eval(records: &[EvalRecord], engine: &Engine, config: &EvalConfig) -> Result<MetricReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let questions: Vec<QuestionResult> = records.par_iter().map(|r| evaluate_one(r, engine, config)).collect();
    let all: Vec<&QuestionResult> = questions.iter().collect();
    let overall = summarize(&all, config.gmap_epsilon);
    let mut by_type = BTreeMap::new();
    for t in QuestionType::ALL {
        let subset: Vec<&QuestionResult> = questions.iter().filter(|q| q.question_type == t).collect();
        if !subset.is_empty() {
            by_type.insert(t, summarize(&subset, config.gmap_epsilon));
        }
    }
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        eval_config: *config,
        overall,
        by_type,
        questions,
        config: None,
    })
}
