use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GenerationRequest, Generator, ProviderError, Role};

/// Key that matches any request with the same role and template id. Exact keys
/// always take precedence over the wildcard.
pub const WILDCARD_KEY: &str = "*";

/// One line of a provider script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub role: Role,
    pub template_id: String,
    pub key: String,
    pub response: String,
}

/// Canned responses keyed by (role, template id, key).
#[derive(Debug, Clone, Default)]
pub struct ProviderScript {
    entries: HashMap<(Role, String, String), String>,
}

impl ProviderScript {
    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Result<Self, ProviderError> {
        let mut map = HashMap::new();
        for e in entries {
            let matcher = (e.role, e.template_id, e.key);
            if map.contains_key(&matcher) {
                return Err(ProviderError::Script(format!(
                    "duplicate matcher role={} template={} key={:?}",
                    matcher.0, matcher.1, matcher.2
                )));
            }
            map.insert(matcher, e.response);
        }
        Ok(Self { entries: map })
    }

    /// Parses line-delimited `{role, template_id, key, response}` objects.
    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|e| ProviderError::Script(format!("line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, role: Role, template_id: &str, key: &str) -> Option<&str> {
        let exact = (role, template_id.to_string(), key.to_string());
        self.entries
            .get(&exact)
            .or_else(|| self.entries.get(&(role, template_id.to_string(), WILDCARD_KEY.to_string())))
            .map(String::as_str)
    }
}

/// Replays a [`ProviderScript`]; unmatched requests are errors.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    script: ProviderScript,
}

impl ScriptedGenerator {
    pub fn new(script: ProviderScript) -> Self {
        Self { script }
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        self.script
            .lookup(req.role, &req.template_id, &req.key)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::MockMiss {
                role: req.role,
                template_id: req.template_id.clone(),
                key: req.key.clone(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCRIPT: &str = r#"
{"role":"reasoner","template_id":"relevance_check","key":"Q1 | c1","response":"RELEVANT: mentions the drug"}
{"role":"reasoner","template_id":"relevance_check","key":"*","response":"IRRELEVANT: off topic"}
"#;

    #[test]
    fn exact_key_beats_wildcard() {
        let s = ProviderScript::parse(SCRIPT).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.lookup(Role::Reasoner, "relevance_check", "Q1 | c1"), Some("RELEVANT: mentions the drug"));
        assert_eq!(s.lookup(Role::Reasoner, "relevance_check", "Q1 | c2"), Some("IRRELEVANT: off topic"));
        assert_eq!(s.lookup(Role::Judge, "relevance_check", "Q1 | c1"), None);
    }

    #[test]
    fn duplicate_matchers_rejected() {
        let dup = format!("{SCRIPT}\n{}", SCRIPT.lines().nth(1).unwrap());
        assert!(matches!(ProviderScript::parse(&dup), Err(ProviderError::Script(_))));
    }

    #[test]
    fn unknown_fields_and_bad_roles_rejected() {
        assert!(ProviderScript::parse(r#"{"role":"oracle","template_id":"t","key":"k","response":"r"}"#).is_err());
        assert!(ProviderScript::parse(r#"{"role":"judge","template_id":"t","key":"k","response":"r","x":1}"#).is_err());
    }

    #[test]
    fn miss_is_an_error() {
        let g = ScriptedGenerator::new(ProviderScript::default());
        let req = GenerationRequest::new(
            Role::Judge,
            "judge",
            "k",
            super::super::Prompt {
                system: "s".into(),
                user: "u".into(),
            },
        );
        assert!(matches!(g.generate(&req), Err(ProviderError::MockMiss { .. })));
    }
}
