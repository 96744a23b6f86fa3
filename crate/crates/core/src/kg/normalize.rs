use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EntityRef, EntityType, KgError};
use crate::providers::templates::{CANONICAL_RENAME, NORMALIZATION};
use crate::providers::{cosine_similarity, Embedder, EmbeddingVector, Role, Session};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconTerm {
    pub term: String,
    pub id: String,
}

/// A controlled vocabulary with one embedding per term.
#[derive(Debug, Clone)]
pub struct Lexicon {
    name: String,
    terms: Vec<LexiconTerm>,
    vectors: Vec<EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconCandidate {
    pub term: String,
    pub id: String,
    pub similarity: f64,
}

impl Lexicon {
    /// `term<TAB>id` per line; the id column is optional and defaults to the
    /// term. Blank lines and `#` comments are skipped.
    pub fn parse_terms(source: &str, text: &str) -> Result<Vec<LexiconTerm>, KgError> {
        let mut terms = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (term, id) = match line.split_once('\t') {
                Some((t, i)) => (t.trim(), i.trim()),
                None => (line.trim(), line.trim()),
            };
            if term.is_empty() {
                return Err(KgError::Lexicon {
                    path: source.to_string(),
                    line: n + 1,
                    message: "empty term".into(),
                });
            }
            let id = if id.is_empty() { term } else { id };
            terms.push(LexiconTerm {
                term: term.to_string(),
                id: id.to_string(),
            });
        }
        Ok(terms)
    }

    pub fn new(name: impl Into<String>, terms: Vec<LexiconTerm>, embedder: &dyn Embedder) -> Result<Self, KgError> {
        if terms.is_empty() {
            return Err(KgError::EmptyLexicon);
        }
        let vectors = terms.iter().map(|t| embedder.embed(&t.term)).collect::<Result<_, _>>()?;
        Ok(Self {
            name: name.into(),
            terms,
            vectors,
        })
    }

    pub fn load(path: &Path, embedder: &dyn Embedder) -> Result<Self, KgError> {
        let text = std::fs::read_to_string(path).map_err(KgError::store(path))?;
        let source = path.display().to_string();
        let terms = Self::parse_terms(&source, &text)?;
        Self::new(source, terms, embedder)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Top `k` terms by cosine to `surface`; ties keep lexicon order.
    pub fn candidates(&self, surface: &str, embedder: &dyn Embedder, k: usize) -> Result<Vec<LexiconCandidate>, KgError> {
        let query = embedder.embed(surface)?;
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| Ok((i, cosine_similarity(&query, v)?)))
            .collect::<Result<_, KgError>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, similarity)| LexiconCandidate {
                term: self.terms[i].term.clone(),
                id: self.terms[i].id.clone(),
                similarity,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub entity: EntityRef,
    pub candidates: Vec<LexiconCandidate>,
    /// False when the adjudicator rejected every candidate.
    pub canonical: bool,
}

/// `Some(n)` for a 1-based pick, `None` for NONE.
fn parse_pick(reply: &str, count: usize) -> Result<Option<usize>, String> {
    let r = reply.trim().trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '.'));
    if r.to_uppercase().starts_with("NONE") {
        return Ok(None);
    }
    let digits: String = r.chars().skip_while(|c| *c == '[' || *c == '#').take_while(char::is_ascii_digit).collect();
    let n: usize = digits.parse().map_err(|_| format!("expected a candidate number or NONE, got {r:?}"))?;
    if n == 0 || n > count {
        return Err(format!("candidate {n} is out of range 1..={count}"));
    }
    Ok(Some(n))
}

/// Links an entity mention to a lexicon term: top-`k` candidates by cosine,
/// then the extractor picks one or rejects all. Scripted-backend key: the
/// surface form.
pub fn normalize_entity(
    entity: &EntityRef,
    lexicon: &Lexicon,
    embedder: &dyn Embedder,
    session: &Session<'_>,
    k: usize,
) -> Result<Normalization, KgError> {
    if lexicon.is_empty() {
        return Err(KgError::EmptyLexicon);
    }
    if entity.surface.trim().is_empty() {
        return Err(KgError::EmptyInput("entity surface"));
    }
    let candidates = lexicon.candidates(&entity.surface, embedder, k.max(1))?;
    let listing = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {} ({})", i + 1, c.term, c.id))
        .collect::<Vec<_>>()
        .join("\n");
    let pick = session.call_parsed(
        Role::Extractor,
        NORMALIZATION,
        &entity.surface,
        &[("surface", &entity.surface), ("entity_type", entity.entity_type.as_str()), ("candidates", &listing)],
        |reply| parse_pick(reply, candidates.len()),
    )?;
    let mut out = entity.clone();
    if let Some(n) = pick {
        let c = &candidates[n - 1];
        out.canonical_id = Some(c.id.clone());
        out.canonical_name = Some(c.term.clone());
    }
    Ok(Normalization {
        entity: out,
        candidates,
        canonical: pick.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonEntry {
    pub canonical_name: String,
    /// Vector of the name that seeded the entry.
    pub vector: EmbeddingVector,
    pub aliases: BTreeSet<String>,
}

/// Incrementally built set of canonical names for one entity type.
#[derive(Debug, Clone, Default)]
pub struct CanonRegistry {
    entries: Vec<CanonEntry>,
    alias_index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonOutcome {
    pub canonical_name: String,
    pub merged: bool,
    /// Best cosine against existing entries, if any were compared.
    pub similarity: Option<f64>,
}

fn fold(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl CanonRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CanonEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical name for a previously seen name.
    pub fn lookup(&self, name: &str) -> Option<&str> {
        self.alias_index
            .get(&fold(name))
            .map(|&i| self.entries[i].canonical_name.as_str())
    }
}

/// Merges `name` into the most similar entry when cosine exceeds `threshold`
/// (strictly), otherwise starts a new entry. Names already seen resolve to
/// their entry without re-embedding, so earlier merges stick.
pub fn canonicalize_incremental(
    name: &str,
    registry: &mut CanonRegistry,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<CanonOutcome, KgError> {
    let name = name.trim();
    if name.is_empty() {
        return Err(KgError::EmptyInput("name"));
    }
    let key = fold(name);
    if let Some(&i) = registry.alias_index.get(&key) {
        let entry = &mut registry.entries[i];
        entry.aliases.insert(name.to_string());
        return Ok(CanonOutcome {
            canonical_name: entry.canonical_name.clone(),
            merged: true,
            similarity: Some(1.0),
        });
    }
    let vector = embedder.embed(name)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in registry.entries.iter().enumerate() {
        let sim = cosine_similarity(&vector, &e.vector)?;
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    match best {
        Some((i, sim)) if sim > threshold => {
            registry.entries[i].aliases.insert(name.to_string());
            registry.alias_index.insert(key, i);
            Ok(CanonOutcome {
                canonical_name: registry.entries[i].canonical_name.clone(),
                merged: true,
                similarity: Some(sim),
            })
        }
        _ => {
            registry.entries.push(CanonEntry {
                canonical_name: name.to_string(),
                vector,
                aliases: BTreeSet::from([name.to_string()]),
            });
            registry.alias_index.insert(key, registry.entries.len() - 1);
            Ok(CanonOutcome {
                canonical_name: name.to_string(),
                merged: false,
                similarity: best.map(|(_, s)| s),
            })
        }
    }
}

/// Optional clean-up pass: for every entry with more than one alias the
/// extractor picks the best display name among its aliases. Returns
/// `(old, new)` for every entry whose canonical name changed.
/// Scripted-backend key: the entry's current canonical name.
pub fn rename_entries(
    registry: &mut CanonRegistry,
    entity_type: EntityType,
    session: &Session<'_>,
) -> Result<Vec<(String, String)>, KgError> {
    let mut renames = Vec::new();
    for entry in registry.entries.iter_mut().filter(|e| e.aliases.len() > 1) {
        let listing = entry.aliases.iter().map(|a| format!("- {a}")).collect::<Vec<_>>().join("\n");
        let aliases = &entry.aliases;
        let pick = session.call_parsed(
            Role::Extractor,
            CANONICAL_RENAME,
            &entry.canonical_name,
            &[("entity_type", entity_type.as_str()), ("aliases", &listing)],
            |reply| {
                let r = reply.trim().trim_start_matches("- ").trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*'));
                aliases
                    .iter()
                    .find(|a| a.as_str() == r)
                    .or_else(|| aliases.iter().find(|a| a.eq_ignore_ascii_case(r)))
                    .cloned()
                    .ok_or_else(|| format!("{r:?} is not one of the listed names"))
            },
        )?;
        if pick != entry.canonical_name {
            renames.push((std::mem::replace(&mut entry.canonical_name, pick.clone()), pick));
        }
    }
    Ok(renames)
}
