use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EntityRef, EntityType, KgError, RelationVocabulary, Triple, IN_DIRECTION, USES_DATASET, USES_METHOD};
use crate::corpus::Document;
use crate::providers::templates::{META_EXTRACTION, TRIPLET_EXTRACTION};
use crate::providers::{Role, Session};
use crate::text::extract_json;

/// Body text shown to the extractor is cut to this many bytes (at a char boundary).
const META_BODY_BYTES: usize = 6000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub triples: Vec<Triple>,
    pub warnings: Vec<String>,
}

fn field<'a>(item: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| item.get(*k)).and_then(Value::as_str).map(str::trim)
}

/// Parses an extractor reply. Only a reply with no JSON array at all is an
/// error; individual bad items become warnings.
pub fn parse_triples_reply(reply: &str, doc_id: &str, vocabulary: &RelationVocabulary) -> Result<Extraction, String> {
    let json = extract_json(reply, '[', ']').ok_or("reply contains no JSON array")?;
    let items: Vec<Value> = serde_json::from_str(json).map_err(|e| format!("bad JSON array: {e}"))?;
    let mut out = Extraction::default();
    for (i, item) in items.iter().enumerate() {
        match parse_item(item, doc_id, vocabulary) {
            Ok(t) if out.triples.contains(&t) => {}
            Ok(t) => out.triples.push(t),
            Err(why) => out.warnings.push(format!("{doc_id} item {i}: {why}")),
        }
    }
    Ok(out)
}

fn parse_item(item: &Value, doc_id: &str, vocabulary: &RelationVocabulary) -> Result<Triple, String> {
    let get = |keys: &[&str], what: &str| field(item, keys).filter(|s| !s.is_empty()).ok_or(format!("missing {what}"));
    let h = get(&["h", "head"], "head")?;
    let t = get(&["t", "tail"], "tail")?;
    let r = get(&["r", "relation"], "relation")?;
    let entity_type = |s: &str| -> Result<EntityType, String> {
        let ty: EntityType = s.parse().map_err(|_| format!("entity type {s:?} not allowed"))?;
        if ty.is_biomedical() {
            Ok(ty)
        } else {
            Err(format!("entity type {s:?} not allowed"))
        }
    };
    let ht = entity_type(get(&["ht", "head_type"], "head type")?)?;
    let tt = entity_type(get(&["tt", "tail_type"], "tail type")?)?;
    let relation = vocabulary
        .resolve(r)
        .ok_or_else(|| format!("relation {r:?} not in vocabulary"))?
        .to_string();
    let head = EntityRef::new(h, ht);
    let tail = EntityRef::new(t, tt);
    if head.node_id() == tail.node_id() && !vocabulary.allows_self_loops() {
        return Err(format!("self-loop on {h:?}"));
    }
    Ok(Triple {
        head,
        relation,
        tail,
        provenance_doc_id: doc_id.to_string(),
    })
}

/// Entity-level triples from one abstract. Scripted-backend key: the doc id.
pub fn extract_triples(
    doc_id: &str,
    abstract_text: &str,
    vocabulary: &RelationVocabulary,
    session: &Session<'_>,
) -> Result<Extraction, KgError> {
    if abstract_text.trim().is_empty() {
        return Err(KgError::EmptyInput("abstract"));
    }
    let relations = vocabulary.configured().collect::<Vec<_>>().join(", ");
    let out = session.call_parsed(
        Role::Extractor,
        TRIPLET_EXTRACTION,
        doc_id,
        &[("doc_id", doc_id), ("abstract", abstract_text), ("relations", &relations)],
        |reply| parse_triples_reply(reply, doc_id, vocabulary),
    )?;
    for w in &out.warnings {
        log::warn!("dropped extracted triple: {w}");
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default)]
    pub datasets: Vec<String>,
    #[serde(default)]
    pub directions: Vec<String>,
}

impl DocMeta {
    /// Paper-to-meta triples, tails as given (not yet canonicalized).
    pub fn triples(&self, doc_id: &str) -> Vec<Triple> {
        let groups = [
            (&self.methods, EntityType::Method, USES_METHOD),
            (&self.datasets, EntityType::Dataset, USES_DATASET),
            (&self.directions, EntityType::ResearchDirection, IN_DIRECTION),
        ];
        groups
            .into_iter()
            .flat_map(|(names, ty, rel)| {
                names.iter().map(move |n| Triple {
                    head: EntityRef::paper(doc_id),
                    relation: rel.to_string(),
                    tail: EntityRef::new(n.clone(), ty),
                    provenance_doc_id: doc_id.to_string(),
                })
            })
            .collect()
    }
}

fn name_list(value: Option<&Value>, key: &str) -> Result<Vec<String>, String> {
    let Some(value) = value else { return Ok(vec![]) };
    let arr = value.as_array().ok_or(format!("{key} must be a list"))?;
    let mut out: Vec<String> = Vec::new();
    for v in arr {
        let s = v.as_str().ok_or(format!("{key} must contain strings"))?.trim();
        if !s.is_empty() && !out.iter().any(|x| x.eq_ignore_ascii_case(s)) {
            out.push(s.to_string());
        }
    }
    Ok(out)
}

pub fn parse_meta_reply(reply: &str) -> Result<DocMeta, String> {
    let json = extract_json(reply, '{', '}').ok_or("reply contains no JSON object")?;
    let v: Value = serde_json::from_str(json).map_err(|e| format!("bad JSON: {e}"))?;
    if !v.is_object() {
        return Err("reply must be a JSON object".into());
    }
    Ok(DocMeta {
        methods: name_list(v.get("methods"), "methods")?,
        datasets: name_list(v.get("datasets"), "datasets")?,
        directions: name_list(v.get("directions"), "directions")?,
    })
}

fn truncate(text: &str, max: usize) -> &str {
    if text.len() <= max {
        return text;
    }
    let mut end = max;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

/// Methods, datasets and research directions of one paper.
/// Scripted-backend key: the doc id.
pub fn extract_doc_meta(doc: &Document, session: &Session<'_>) -> Result<(DocMeta, Vec<Triple>), KgError> {
    if !doc.has_text() {
        return Err(KgError::EmptyInput("document"));
    }
    let meta = session.call_parsed(
        Role::Extractor,
        META_EXTRACTION,
        &doc.doc_id,
        &[
            ("title", &doc.title),
            ("abstract", &doc.abstract_text),
            ("body", truncate(&doc.body, META_BODY_BYTES)),
        ],
        parse_meta_reply,
    )?;
    let triples = meta.triples(&doc.doc_id);
    Ok((meta, triples))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::providers::{HashingEmbedder, PromptTemplates, ProviderHub, ProviderScript, ScriptEntry};

    #[test]
    fn parses_scripted_triple() {
        let v = RelationVocabulary::default();
        let out = parse_triples_reply(
            r#"[{"h":"Cisplatin","ht":"Drug","r":"treats","t":"lymphoma","tt":"Disease"}]"#,
            "D1",
            &v,
        )
        .unwrap();
        assert_eq!(out.triples.len(), 1);
        let t = &out.triples[0];
        assert_eq!((t.head.surface.as_str(), t.relation.as_str(), t.tail.surface.as_str()), ("Cisplatin", "treats", "lymphoma"));
        assert_eq!(t.provenance_doc_id, "D1");
    }

    #[test]
    fn bad_items_become_warnings() {
        let v = RelationVocabulary::default();
        let out = parse_triples_reply(
            r#"Here: [{"h":"Paris","ht":"City","r":"treats","t":"x","tt":"Disease"},
                {"h":"A","ht":"Gene","r":"cures","t":"B","tt":"Gene"},
                {"h":"A","ht":"Gene","r":"regulates","t":"a","tt":"Gene"},
                {"h":"A","ht":"Gene","r":"regulates"},
                {"h":"miR-375","ht":"Gene","r":"Regulates","t":"ITPKB","tt":"Gene"}]"#,
            "D1",
            &v,
        )
        .unwrap();
        assert_eq!(out.triples.len(), 1);
        assert_eq!(out.warnings.len(), 4);
        assert!(out.warnings[0].contains("City"));
        assert!(parse_triples_reply("no idea", "D1", &v).is_err());
    }

    #[test]
    fn meta_reply_parsing() {
        let m = parse_meta_reply(r#"{"methods":["single-cell RNA-seq"],"datasets":[],"directions":["oncology"]}"#).unwrap();
        let t = m.triples("D1");
        assert_eq!(t.iter().filter(|t| t.relation == USES_METHOD).count(), 1);
        assert_eq!(t.iter().filter(|t| t.relation == USES_DATASET).count(), 0);
        assert_eq!(t[0].head.node_id(), "Paper:D1");
        assert_eq!(parse_meta_reply("{}").unwrap(), DocMeta::default());
        assert!(parse_meta_reply(r#"{"methods":"PCR"}"#).is_err());
    }

    #[test]
    fn extraction_retries_once_then_errors() {
        let script = ProviderScript::from_entries(vec![ScriptEntry {
            role: Role::Extractor,
            template_id: TRIPLET_EXTRACTION.into(),
            key: "D1".into(),
            response: "I cannot comply".into(),
        }])
        .unwrap();
        let hub = ProviderHub::scripted(script, Arc::new(HashingEmbedder::new(8)));
        let templates = PromptTemplates::default();
        let s = Session::new(&hub, &templates);
        let v = RelationVocabulary::default();
        assert!(matches!(extract_triples("D1", "text", &v, &s), Err(KgError::Call(_))));
        assert_eq!(s.records().len(), 2);
        assert!(s.records()[0].prompt.user.contains("associated_with, biomarker_for"));
        assert!(matches!(extract_triples("D1", " ", &v, &s), Err(KgError::EmptyInput(_))));
    }
}
