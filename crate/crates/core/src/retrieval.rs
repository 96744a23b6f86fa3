//! Pre-retrieval reasoning, the six-channel fan-out and the aggregator.
//!
//! The aggregator fuses every channel's hits into one ranked list by
//!
//! ```text
//! S_i = w_S * sim_i / sim_max + w_M * M_i / M_max + w_R * R_i / R_max
//! ```
//!
//! where `sim_i` is the chunk's best similarity across channels, `M_i` the
//! number of distinct channels that returned it and `R_i` the number of
//! distinct retrieved chunks from the same document (itself included). Maxima
//! are taken over the whole deduplicated candidate pool; a factor whose maximum
//! is zero contributes nothing.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::index::{keyword_search, vector_search, Channel, IndexError, IndexSet, RetrievalHit};
use crate::providers::templates::PRE_RETRIEVAL;
use crate::providers::{CallError, Embedder, Role, Session};
use crate::text::extract_json;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("pre-retrieval output is incomplete: {0}")]
    IncompletePre(String),
    #[error("no hits to aggregate")]
    EmptyHits,
    #[error("invalid aggregator weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Call(#[from] CallError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreRetrievalOutput {
    pub keywords: Vec<String>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
    pub virtual_answer: String,
}

impl PreRetrievalOutput {
    pub fn validate(&self) -> Result<(), String> {
        if self.keywords.iter().all(|k| k.trim().is_empty()) {
            return Err("keywords must be non-empty".into());
        }
        if self.virtual_answer.trim().is_empty() {
            return Err("virtual_answer must be non-empty".into());
        }
        if let Some(k) = self.synonyms.keys().find(|k| !self.keywords.contains(k)) {
            return Err(format!("synonyms key {k:?} is not a keyword"));
        }
        Ok(())
    }

    /// Parses a reasoner reply, tolerating prose or fences around the JSON.
    pub fn parse_reply(reply: &str) -> Result<Self, String> {
        let json = extract_json(reply, '{', '}').ok_or("reply contains no JSON object")?;
        let mut out: PreRetrievalOutput = serde_json::from_str(json).map_err(|e| format!("bad JSON: {e}"))?;
        out.keywords.retain(|k| !k.trim().is_empty());
        for list in out.synonyms.values_mut() {
            list.retain(|s| !s.trim().is_empty());
        }
        out.validate()?;
        Ok(out)
    }
}

/// Asks the reasoner for keywords, synonyms and a virtual answer.
/// The scripted-backend key is the question text.
pub fn pre_retrieval_reason(question: &str, session: &Session<'_>) -> Result<PreRetrievalOutput, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::EmptyQuestion);
    }
    Ok(session.call_parsed(
        Role::Reasoner,
        PRE_RETRIEVAL,
        question,
        &[("question", question)],
        PreRetrievalOutput::parse_reply,
    )?)
}

/// Runs all six channels (in parallel) and concatenates their hits in
/// [`Channel::ALL`] order. No cross-channel deduplication happens here.
pub fn multi_channel_retrieve(
    question: &str,
    pre: &PreRetrievalOutput,
    indexes: &IndexSet,
    embedder: &dyn Embedder,
    k_per_channel: usize,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::EmptyQuestion);
    }
    pre.validate().map_err(RetrievalError::IncompletePre)?;
    let runs: Vec<Vec<RetrievalHit>> = Channel::ALL
        .par_iter()
        .map(|&channel| run_channel(channel, question, pre, indexes, embedder, k_per_channel))
        .collect::<Result<_, _>>()?;
    Ok(runs.into_iter().flatten().collect())
}

pub fn run_channel(
    channel: Channel,
    question: &str,
    pre: &PreRetrievalOutput,
    indexes: &IndexSet,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<RetrievalHit>, IndexError> {
    let level = channel.level();
    match channel {
        Channel::QuestionAbstract | Channel::QuestionFullText => {
            vector_search(indexes.vectors(level), question, k, embedder, channel)
        }
        Channel::VirtualAnswerAbstract | Channel::VirtualAnswerFullText => {
            vector_search(indexes.vectors(level), &pre.virtual_answer, k, embedder, channel)
        }
        Channel::KeywordAbstract | Channel::KeywordFullText => {
            keyword_search(indexes.keywords(level), &pre.keywords, &pre.synonyms, k, channel)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorWeights {
    pub w_s: f64,
    pub w_m: f64,
    pub w_r: f64,
}

impl Default for AggregatorWeights {
    fn default() -> Self {
        Self {
            w_s: 5.0,
            w_m: 3.0,
            w_r: 1.0,
        }
    }
}

impl AggregatorWeights {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let all = [self.w_s, self.w_m, self.w_r];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RetrievalError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(RetrievalError::InvalidWeights("at least one weight must be positive".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.w_s + self.w_m + self.w_r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedCandidate {
    pub chunk_id: String,
    pub doc_id: String,
    /// Best similarity over the channels that returned the chunk.
    pub s_sim: f64,
    /// Distinct channels that returned the chunk.
    pub m: usize,
    /// Distinct retrieved chunks from the same document, this one included.
    pub r: usize,
    pub channels: Vec<Channel>,
    pub score: f64,
}

fn ratio(value: f64, max: f64) -> f64 {
    if max > 0.0 {
        value / max
    } else {
        0.0
    }
}

/// Deduplicates hits by chunk, scores each candidate and sorts by score
/// descending, then `(doc_id, chunk_id)` ascending.
pub fn aggregate(hits: &[RetrievalHit], weights: &AggregatorWeights) -> Result<Vec<AggregatedCandidate>, RetrievalError> {
    weights.validate()?;
    if hits.is_empty() {
        return Err(RetrievalError::EmptyHits);
    }
    struct Acc<'a> {
        doc_id: &'a str,
        s_sim: f64,
        channels: BTreeSet<Channel>,
    }
    let mut by_chunk: BTreeMap<&str, Acc<'_>> = BTreeMap::new();
    for h in hits {
        let acc = by_chunk.entry(&h.chunk_id).or_insert_with(|| Acc {
            doc_id: &h.doc_id,
            s_sim: 0.0,
            channels: BTreeSet::new(),
        });
        acc.s_sim = acc.s_sim.max(h.similarity);
        acc.channels.insert(h.channel);
    }
    let mut per_doc: BTreeMap<&str, usize> = BTreeMap::new();
    for acc in by_chunk.values() {
        *per_doc.entry(acc.doc_id).or_default() += 1;
    }
    let s_max = by_chunk.values().map(|a| a.s_sim).fold(0.0, f64::max);
    let m_max = by_chunk.values().map(|a| a.channels.len()).max().unwrap_or(0) as f64;
    let r_max = per_doc.values().copied().max().unwrap_or(0) as f64;

    let mut out: Vec<AggregatedCandidate> = by_chunk
        .into_iter()
        .map(|(chunk_id, acc)| {
            let m = acc.channels.len();
            let r = per_doc[acc.doc_id];
            let score = weights.w_s * ratio(acc.s_sim, s_max)
                + weights.w_m * ratio(m as f64, m_max)
                + weights.w_r * ratio(r as f64, r_max);
            AggregatedCandidate {
                chunk_id: chunk_id.to_string(),
                doc_id: acc.doc_id.to_string(),
                s_sim: acc.s_sim,
                m,
                r,
                channels: acc.channels.into_iter().collect(),
                score,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::providers::{HashingEmbedder, ProviderHub, ProviderScript, PromptTemplates, ScriptEntry};

    fn hit(chunk: &str, doc: &str, channel: Channel, similarity: f64) -> RetrievalHit {
        RetrievalHit {
            chunk_id: chunk.into(),
            doc_id: doc.into(),
            channel,
            similarity,
            rank: 1,
        }
    }

    #[test]
    fn default_weights_are_five_three_one() {
        assert_eq!(AggregatorWeights::default(), AggregatorWeights { w_s: 5.0, w_m: 3.0, w_r: 1.0 });
    }

    #[test]
    fn single_hit_scores_weight_total() {
        let out = aggregate(&[hit("c", "d", Channel::QuestionAbstract, 0.4)], &AggregatorWeights::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 9.0);
    }

    #[test]
    fn worked_example_a_b_c() {
        // A: s=0.90 m=2 r=3; B: s=0.60 m=1 r=3 (same doc as A, plus filler X);
        // C: s=0.45 m=1 r=1.
        let hits = vec![
            hit("A", "d1", Channel::QuestionAbstract, 0.90),
            hit("A", "d1", Channel::KeywordAbstract, 0.50),
            hit("B", "d1", Channel::QuestionFullText, 0.60),
            hit("X", "d1", Channel::QuestionFullText, 0.10),
            hit("C", "d2", Channel::VirtualAnswerFullText, 0.45),
        ];
        let out = aggregate(&hits, &AggregatorWeights::default()).unwrap();
        let get = |id: &str| out.iter().find(|c| c.chunk_id == id).unwrap();
        assert_eq!((get("A").m, get("A").r), (2, 3));
        assert_eq!((get("B").m, get("B").r), (1, 3));
        assert_eq!((get("C").m, get("C").r), (1, 1));
        assert!((get("A").score - 9.0).abs() < 1e-4);
        assert!((get("B").score - 5.8333).abs() < 1e-4);
        assert!((get("C").score - 4.3333).abs() < 1e-4);
        let order: Vec<_> = out.iter().map(|c| c.chunk_id.as_str()).filter(|c| *c != "X").collect();
        assert_eq!(order, vec!["A", "B", "C"]);
    }

    #[test]
    fn zero_similarity_maximum_contributes_nothing() {
        let hits = vec![hit("a", "d1", Channel::KeywordAbstract, 0.0), hit("b", "d2", Channel::KeywordFullText, 0.0)];
        let out = aggregate(&hits, &AggregatorWeights::default()).unwrap();
        assert!(out.iter().all(|c| c.score == 4.0));
        assert_eq!(out[0].chunk_id, "a");
    }

    #[test]
    fn errors() {
        assert!(matches!(aggregate(&[], &AggregatorWeights::default()), Err(RetrievalError::EmptyHits)));
        let w = AggregatorWeights { w_s: 0.0, w_m: 0.0, w_r: 0.0 };
        assert!(matches!(
            aggregate(&[hit("a", "d", Channel::KeywordAbstract, 1.0)], &w),
            Err(RetrievalError::InvalidWeights(_))
        ));
    }

    #[test]
    fn pre_reply_parsing() {
        let reply = r#"Here you go:
```json
{"keywords":["cisplatin"],"synonyms":{"cisplatin":["CDDP"]},"virtual_answer":"Cisplatin is a platinum drug."}
```"#;
        let out = PreRetrievalOutput::parse_reply(reply).unwrap();
        assert_eq!(out.keywords, vec!["cisplatin"]);
        assert_eq!(out.synonyms["cisplatin"], vec!["CDDP"]);
        assert!(PreRetrievalOutput::parse_reply(r#"{"keywords":["x"],"synonyms":{}}"#).is_err());
        assert!(PreRetrievalOutput::parse_reply(r#"{"keywords":[],"virtual_answer":"v"}"#).is_err());
        assert!(PreRetrievalOutput::parse_reply(r#"{"keywords":["a"],"synonyms":{"b":["c"]},"virtual_answer":"v"}"#).is_err());
    }

    #[test]
    fn pre_retrieval_retries_once_on_missing_field() {
        let script = ProviderScript::from_entries(vec![
            ScriptEntry {
                role: Role::Reasoner,
                template_id: PRE_RETRIEVAL.into(),
                key: "Q-good".into(),
                response: r#"{"keywords":["cisplatin"],"synonyms":{"cisplatin":["CDDP"]},"virtual_answer":"Cisplatin is..."}"#.into(),
            },
            ScriptEntry {
                role: Role::Reasoner,
                template_id: PRE_RETRIEVAL.into(),
                key: "Q-bad".into(),
                response: r#"{"keywords":["cisplatin"],"synonyms":{}}"#.into(),
            },
        ])
        .unwrap();
        let hub = ProviderHub::scripted(script, Arc::new(HashingEmbedder::new(8)));
        let templates = PromptTemplates::default();
        let session = Session::new(&hub, &templates);
        let good = pre_retrieval_reason("Q-good", &session).unwrap();
        assert_eq!(good.virtual_answer, "Cisplatin is...");
        assert_eq!(session.take_records().len(), 1);
        assert!(matches!(
            pre_retrieval_reason("Q-bad", &session),
            Err(RetrievalError::Call(CallError::Malformed { .. }))
        ));
        assert_eq!(session.take_records().len(), 2);
        assert!(matches!(pre_retrieval_reason(" ", &session), Err(RetrievalError::EmptyQuestion)));
    }
}
