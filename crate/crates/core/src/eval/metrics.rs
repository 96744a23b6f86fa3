//! Set and ranking metrics. Every function is pure and takes ids or answer
//! strings; duplicates in inputs are ignored after their first occurrence.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::text::normalize_answer;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

fn set<S: AsRef<str>>(items: &[S]) -> BTreeSet<&str> {
    items.iter().map(AsRef::as_ref).collect()
}

fn dedup<S: AsRef<str>>(items: &[S]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    items.iter().map(AsRef::as_ref).filter(|s| seen.insert(*s)).collect()
}

/// Set precision/recall/F1 of predicted documents against gold.
pub fn doc_prf<S: AsRef<str>, T: AsRef<str>>(predicted: &[S], gold: &[T]) -> Result<Prf, EvalError> {
    let gold = set(gold);
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let predicted = set(predicted);
    if predicted.is_empty() {
        return Ok(Prf::default());
    }
    let hits = predicted.intersection(&gold).count() as f64;
    Ok(Prf::new(hits / predicted.len() as f64, hits / gold.len() as f64))
}

/// Average precision: precision at each rank holding a new gold document,
/// summed and divided by the number of gold documents.
pub fn ap<S: AsRef<str>, T: AsRef<str>>(ranked: &[S], gold: &[T]) -> Result<f64, EvalError> {
    let gold = set(gold);
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in dedup(ranked).into_iter().enumerate() {
        if gold.contains(d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / gold.len() as f64)
}

/// Arithmetic mean and epsilon-smoothed geometric mean of average precisions.
pub fn map_gmap(aps: &[f64], epsilon: f64) -> Result<(f64, f64), EvalError> {
    if aps.is_empty() {
        return Err(EvalError::EmptyInput("AP list"));
    }
    let n = aps.len() as f64;
    let map = aps.iter().sum::<f64>() / n;
    let log_mean = aps.iter().map(|a| (a + epsilon).ln()).sum::<f64>() / n;
    Ok((map, log_mean.exp()))
}

/// Reciprocal rank of the first gold document; 0 when none is ranked.
pub fn rr<S: AsRef<str>, T: AsRef<str>>(ranked: &[S], gold: &[T]) -> Result<f64, EvalError> {
    let gold = set(gold);
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(dedup(ranked)
        .iter()
        .position(|d| gold.contains(d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// Case-folded, whitespace-normalized equality.
pub fn default_matcher(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}

/// List-answer P/R/F1: precision over distinct predicted items that match some
/// gold item, recall over gold items matched by some prediction.
pub fn list_prf<S: AsRef<str>, T: AsRef<str>>(
    predicted: &[S],
    gold: &[T],
    matcher: &dyn Fn(&str, &str) -> bool,
) -> Result<Prf, EvalError> {
    let gold: Vec<&str> = dedup_by(gold, matcher);
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let predicted: Vec<&str> = dedup_by(predicted, matcher);
    if predicted.is_empty() {
        return Ok(Prf::default());
    }
    let correct = predicted.iter().filter(|p| gold.iter().any(|g| matcher(p, g))).count() as f64;
    let found = gold.iter().filter(|g| predicted.iter().any(|p| matcher(p, g))).count() as f64;
    Ok(Prf::new(correct / predicted.len() as f64, found / gold.len() as f64))
}

fn dedup_by<'a, S: AsRef<str>>(items: &'a [S], matcher: &dyn Fn(&str, &str) -> bool) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items.iter().map(AsRef::as_ref).filter(|s| !s.trim().is_empty()) {
        if !out.iter().any(|o| matcher(o, s)) {
            out.push(s);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    /// Reads the first word of an answer.
    pub fn parse(text: &str) -> Option<Self> {
        let first = text
            .split(|c: char| !c.is_alphanumeric())
            .find(|w| !w.is_empty())?
            .to_lowercase();
        match first.as_str() {
            "yes" => Some(YesNo::Yes),
            "no" => Some(YesNo::No),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct YesNoMetrics {
    pub count: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and the mean of per-class F1 (yes and no). An unparseable
/// prediction is wrong for both classes; a class with no gold and no
/// predictions scores F1 = 0.
pub fn yes_no_metrics(pairs: &[(Option<YesNo>, YesNo)]) -> Result<YesNoMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput("yes/no set"));
    }
    let correct = pairs.iter().filter(|(p, g)| *p == Some(*g)).count();
    let class_f1 = |c: YesNo| {
        let tp = pairs.iter().filter(|(p, g)| *p == Some(c) && *g == c).count() as f64;
        let predicted = pairs.iter().filter(|(p, _)| *p == Some(c)).count() as f64;
        let actual = pairs.iter().filter(|(_, g)| *g == c).count() as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        Prf::new(p, r).f1
    };
    Ok(YesNoMetrics {
        count: pairs.len(),
        accuracy: correct as f64 / pairs.len() as f64,
        macro_f1: (class_f1(YesNo::Yes) + class_f1(YesNo::No)) / 2.0,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FactoidScore {
    pub strict: f64,
    pub lenient: f64,
    pub rr: f64,
}

/// Number of ranked factoid candidates that count.
pub const FACTOID_CUTOFF: usize = 5;

/// Strict: top candidate matches a gold synonym. Lenient: any of the top five
/// does. RR: reciprocal rank of the first match within the top five.
pub fn factoid_score<S: AsRef<str>, T: AsRef<str>>(
    ranked: &[S],
    gold_synonyms: &[T],
    matcher: &dyn Fn(&str, &str) -> bool,
) -> Result<FactoidScore, EvalError> {
    if gold_synonyms.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let hit = dedup_by(ranked, matcher)
        .into_iter()
        .take(FACTOID_CUTOFF)
        .position(|c| gold_synonyms.iter().any(|g| matcher(c, g.as_ref())));
    Ok(match hit {
        Some(i) => FactoidScore {
            strict: if i == 0 { 1.0 } else { 0.0 },
            lenient: 1.0,
            rr: 1.0 / (i + 1) as f64,
        },
        None => FactoidScore::default(),
    })
}

/// Splits a free-text answer into list items: one per line, and lines are
/// further split on `;` and `,`. Bullets and numbering are stripped.
pub fn split_answer_list(answer: &str) -> Vec<String> {
    answer
        .lines()
        .flat_map(|l| l.split([';', ',']))
        .map(|item| {
            item.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '-' | '*' | '.' | ')' | '•'))
                .trim()
                .trim_end_matches('.')
                .trim()
                .to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}
