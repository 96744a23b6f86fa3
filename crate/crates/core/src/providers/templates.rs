//! Named prompt templates with `{{placeholder}}` substitution.
//!
//! A template file has an optional `[system]` section followed by a `[user]`
//! section. Defaults are compiled in; a directory of `<id>.txt` files can
//! override any of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::Prompt;

pub const PRE_RETRIEVAL: &str = "pre_retrieval";
pub const RELEVANCE_CHECK: &str = "relevance_check";
pub const DRAFT_ANSWER: &str = "draft_answer";
pub const SELF_REFLECT: &str = "self_reflect";
pub const DEEP_THINK: &str = "deep_think";
pub const TRIPLET_EXTRACTION: &str = "triplet_extraction";
pub const META_EXTRACTION: &str = "meta_extraction";
pub const NORMALIZATION: &str = "normalization";
pub const CANONICAL_RENAME: &str = "canonical_rename";
pub const JUDGE_FIVE_POINT: &str = "judge_five_point";
pub const JUDGE_EXACT_MATCH: &str = "judge_exact_match";
pub const REFORMAT: &str = "reformat";
pub const CLOSED_BOOK: &str = "closed_book";

const DEFAULTS: &[(&str, &str)] = &[
    (PRE_RETRIEVAL, include_str!("../../templates/pre_retrieval.txt")),
    (RELEVANCE_CHECK, include_str!("../../templates/relevance_check.txt")),
    (DRAFT_ANSWER, include_str!("../../templates/draft_answer.txt")),
    (SELF_REFLECT, include_str!("../../templates/self_reflect.txt")),
    (DEEP_THINK, include_str!("../../templates/deep_think.txt")),
    (TRIPLET_EXTRACTION, include_str!("../../templates/triplet_extraction.txt")),
    (META_EXTRACTION, include_str!("../../templates/meta_extraction.txt")),
    (NORMALIZATION, include_str!("../../templates/normalization.txt")),
    (CANONICAL_RENAME, include_str!("../../templates/canonical_rename.txt")),
    (JUDGE_FIVE_POINT, include_str!("../../templates/judge_five_point.txt")),
    (JUDGE_EXACT_MATCH, include_str!("../../templates/judge_exact_match.txt")),
    (REFORMAT, include_str!("../../templates/reformat.txt")),
    (CLOSED_BOOK, include_str!("../../templates/closed_book.txt")),
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown prompt template {0}")]
    Unknown(String),
    #[error("template {template}: no value for placeholder {{{{{name}}}}}")]
    MissingValue { template: String, name: String },
    #[error("template {template}: missing [user] section")]
    NoUserSection { template: String },
    #[error("template directory {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Template {
    system: String,
    user: String,
}

impl Template {
    fn parse(id: &str, text: &str) -> Result<Self, TemplateError> {
        let (system, user) = match text.find("[user]") {
            Some(pos) => (&text[..pos], &text[pos + "[user]".len()..]),
            None => {
                return Err(TemplateError::NoUserSection {
                    template: id.to_string(),
                })
            }
        };
        let system = system.trim_start().strip_prefix("[system]").unwrap_or(system);
        Ok(Self {
            system: system.trim().to_string(),
            user: user.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    templates: BTreeMap<String, Template>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let templates = DEFAULTS
            .iter()
            .map(|(id, text)| (id.to_string(), Template::parse(id, text).expect("bundled template parses")))
            .collect();
        Self { templates }
    }
}

impl PromptTemplates {
    /// Defaults, overridden by every `<id>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let io = |e: std::io::Error| TemplateError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut me = Self::default();
        for entry in fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|x| x == "txt") {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let text = fs::read_to_string(&path).map_err(io)?;
                me.templates.insert(id.clone(), Template::parse(&id, &text)?);
            }
        }
        Ok(me)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, id: &str, values: &[(&str, &str)]) -> Result<Prompt, TemplateError> {
        let t = self.templates.get(id).ok_or_else(|| TemplateError::Unknown(id.to_string()))?;
        Ok(Prompt {
            system: substitute(id, &t.system, values)?,
            user: substitute(id, &t.user, values)?,
        })
    }
}

/// Single pass, so placeholder-like text inside substituted values is left alone.
fn substitute(id: &str, template: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let name_len = after
            .find("}}")
            .filter(|&end| end > 0 && after[..end].chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        match name_len {
            Some(end) => {
                let name = &after[..end];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::MissingValue {
                        template: id.to_string(),
                        name: name.to_string(),
                    })?;
                out.push_str(value);
                rest = &after[end + 2..];
            }
            None => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_default_template_is_present() {
        let t = PromptTemplates::default();
        for (id, _) in DEFAULTS {
            assert!(t.ids().any(|x| x == *id));
        }
    }

    #[test]
    fn substitution_is_single_pass() {
        let t = PromptTemplates::default();
        let p = t
            .render(RELEVANCE_CHECK, &[("question", "Q {{chunk_id}}"), ("chunk_id", "c1"), ("chunk_text", "text")])
            .unwrap();
        assert!(p.user.contains("Question: Q {{chunk_id}}"));
        assert!(p.user.contains("Passage [c1]"));
        assert!(!p.system.is_empty());
    }

    #[test]
    fn missing_value_is_reported() {
        let t = PromptTemplates::default();
        let err = t.render(RELEVANCE_CHECK, &[("question", "Q")]).unwrap_err();
        assert!(matches!(err, TemplateError::MissingValue { .. }));
        assert!(matches!(t.render("nope", &[]), Err(TemplateError::Unknown(_))));
    }

    #[test]
    fn json_braces_survive() {
        let t = PromptTemplates::default();
        let p = t.render(PRE_RETRIEVAL, &[("question", "Q")]).unwrap();
        assert!(p.user.contains(r#"{"keywords": ["term", ...]"#));
    }

    #[test]
    fn directory_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("judge_five_point.txt"), "[user]\nScore {{question}} now").unwrap();
        let t = PromptTemplates::with_overrides(dir.path()).unwrap();
        let p = t.render(JUDGE_FIVE_POINT, &[("question", "Q1")]).unwrap();
        assert_eq!(p.user, "Score Q1 now");
        assert_eq!(p.system, "");
        assert!(t.render(DEEP_THINK, &[("question", "q"), ("context", "c")]).is_ok());
    }
}
