use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::providers::templates::{JUDGE_EXACT_MATCH, JUDGE_FIVE_POINT};
use crate::providers::{Role, Session};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Off,
    /// 1-5 rating mapped onto [0, 1].
    #[default]
    FivePoint,
    /// 0/1 strict equivalence.
    ExactMatch,
}

/// How a 1-5 rating becomes a score in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FivePointMapping {
    /// (s - 1) / 4: a 1 scores 0, a 5 scores 1.
    #[default]
    FromFloor,
    /// s / 5: a 1 scores 0.2.
    OverMax,
}

impl FivePointMapping {
    pub fn apply(&self, rating: u8) -> f64 {
        match self {
            FivePointMapping::FromFloor => f64::from(rating - 1) / 4.0,
            FivePointMapping::OverMax => f64::from(rating) / 5.0,
        }
    }
}

fn leading_int(reply: &str) -> Result<u8, String> {
    let r = reply.trim().trim_start_matches(['*', '"', '\'', '`', '[']);
    let digits: String = r.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().map_err(|_| format!("expected an integer, got {:?}", reply.trim()))
}

pub fn parse_five_point(reply: &str) -> Result<u8, String> {
    let n = leading_int(reply)?;
    if !(1..=5).contains(&n) {
        return Err(format!("rating {n} is outside 1..=5"));
    }
    Ok(n)
}

pub fn parse_exact_match(reply: &str) -> Result<u8, String> {
    let n = leading_int(reply)?;
    if n > 1 {
        return Err(format!("expected 0 or 1, got {n}"));
    }
    Ok(n)
}

/// Grades a predicted answer against the gold answer with the judge role.
/// Scripted-backend key: the question.
pub fn llm_judge(
    question: &str,
    gold_answer: &str,
    predicted_answer: &str,
    mode: JudgeMode,
    mapping: FivePointMapping,
    session: &Session<'_>,
) -> Result<f64, EvalError> {
    let values = [("question", question), ("gold_answer", gold_answer), ("predicted_answer", predicted_answer)];
    match mode {
        JudgeMode::Off => Err(EvalError::JudgeDisabled),
        JudgeMode::FivePoint => {
            let n = session.call_parsed(Role::Judge, JUDGE_FIVE_POINT, question, &values, parse_five_point)?;
            Ok(mapping.apply(n))
        }
        JudgeMode::ExactMatch => {
            let n = session.call_parsed(Role::Judge, JUDGE_EXACT_MATCH, question, &values, parse_exact_match)?;
            Ok(f64::from(n))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::providers::{HashingEmbedder, PromptTemplates, ProviderHub, ProviderScript, ScriptEntry};

    fn judge(reply: &str, mode: JudgeMode) -> Result<f64, EvalError> {
        let template = match mode {
            JudgeMode::ExactMatch => JUDGE_EXACT_MATCH,
            _ => JUDGE_FIVE_POINT,
        };
        let script = ProviderScript::from_entries(vec![ScriptEntry {
            role: Role::Judge,
            template_id: template.into(),
            key: "Q".into(),
            response: reply.into(),
        }])
        .unwrap();
        let hub = ProviderHub::scripted(script, Arc::new(HashingEmbedder::new(4)));
        let t = PromptTemplates::default();
        let s = Session::new(&hub, &t);
        llm_judge("Q", "gold", "pred", mode, FivePointMapping::default(), &s)
    }

    #[test]
    fn five_point_mapping() {
        assert_eq!(judge("5", JudgeMode::FivePoint).unwrap(), 1.0);
        assert_eq!(judge("1", JudgeMode::FivePoint).unwrap(), 0.0);
        assert_eq!(judge("4", JudgeMode::FivePoint).unwrap(), 0.75);
        assert_eq!(judge("**3** partially", JudgeMode::FivePoint).unwrap(), 0.5);
        assert!(judge("6", JudgeMode::FivePoint).is_err());
        assert!(judge("good", JudgeMode::FivePoint).is_err());
        assert_eq!(FivePointMapping::OverMax.apply(4), 0.8);
    }

    #[test]
    fn exact_match() {
        assert_eq!(judge("1", JudgeMode::ExactMatch).unwrap(), 1.0);
        assert_eq!(judge("0", JudgeMode::ExactMatch).unwrap(), 0.0);
        assert!(judge("2", JudgeMode::ExactMatch).is_err());
        assert!(matches!(judge("1", JudgeMode::Off), Err(EvalError::JudgeDisabled)));
    }
}
