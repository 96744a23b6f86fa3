use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Channel, IndexError, RetrievalHit, INDEX_FORMAT_VERSION};
use crate::corpus::{Chunk, ChunkLevel};
use crate::jsonl;
use crate::text::tokenize;

/// Positional inverted index over case-folded Unicode word tokens.
///
/// Positions make multi-word synonyms ("non-small cell lung cancer") match as
/// phrases rather than as bags of words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordIndex {
    level: ChunkLevel,
    /// token -> chunk id -> ascending token positions
    postings: BTreeMap<String, BTreeMap<String, Vec<u32>>>,
    chunk_docs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct KeywordManifest {
    format_version: u32,
    level: ChunkLevel,
    chunk_docs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PostingLine {
    token: String,
    postings: BTreeMap<String, Vec<u32>>,
}

impl KeywordIndex {
    pub fn build(chunks: &[&Chunk], level: ChunkLevel) -> Result<Self, IndexError> {
        if chunks.is_empty() {
            return Err(IndexError::EmptyChunks);
        }
        let mut postings: BTreeMap<String, BTreeMap<String, Vec<u32>>> = BTreeMap::new();
        let mut chunk_docs = BTreeMap::new();
        for c in chunks {
            if c.level != level {
                return Err(IndexError::LevelMismatch {
                    chunk_id: c.chunk_id.clone(),
                    expected: level,
                    found: c.level,
                });
            }
            if chunk_docs.insert(c.chunk_id.clone(), c.doc_id.clone()).is_some() {
                return Err(IndexError::DuplicateChunk(c.chunk_id.clone()));
            }
            for (pos, token) in tokenize(&c.text).into_iter().enumerate() {
                postings
                    .entry(token)
                    .or_default()
                    .entry(c.chunk_id.clone())
                    .or_default()
                    .push(pos as u32);
            }
        }
        Ok(Self {
            level,
            postings,
            chunk_docs,
        })
    }

    pub fn level(&self) -> ChunkLevel {
        self.level
    }

    pub fn len(&self) -> usize {
        self.chunk_docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_docs.is_empty()
    }

    /// Chunks containing `token` (case-folded), deduplicated and sorted.
    pub fn chunks_with(&self, token: &str) -> BTreeSet<&str> {
        self.postings
            .get(&token.to_lowercase())
            .map(|p| p.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Chunks in which the tokens of `phrase` occur contiguously.
    fn phrase_matches(&self, phrase: &[String]) -> BTreeSet<&str> {
        let Some((first, rest)) = phrase.split_first() else {
            return BTreeSet::new();
        };
        let Some(head) = self.postings.get(first) else {
            return BTreeSet::new();
        };
        let tails: Option<Vec<_>> = rest.iter().map(|t| self.postings.get(t)).collect();
        let Some(tails) = tails else {
            return BTreeSet::new();
        };
        head.iter()
            .filter(|(chunk, positions)| {
                positions.iter().any(|&p| {
                    tails.iter().enumerate().all(|(i, t)| {
                        t.get(*chunk)
                            .is_some_and(|ps| ps.binary_search(&(p + 1 + i as u32)).is_ok())
                    })
                })
            })
            .map(|(chunk, _)| chunk.as_str())
            .collect()
    }

    /// Writes `<stem>.manifest.json` and one posting list per line to
    /// `<stem>.postings.jsonl`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), IndexError> {
        let manifest = KeywordManifest {
            format_version: INDEX_FORMAT_VERSION,
            level: self.level,
            chunk_docs: self.chunk_docs.clone(),
        };
        let path = dir.join(format!("{stem}.manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(IndexError::store(&path))?;
        let path = dir.join(format!("{stem}.postings.jsonl"));
        let lines = self.postings.iter().map(|(token, postings)| PostingLine {
            token: token.clone(),
            postings: postings.clone(),
        });
        jsonl::write_lines(&path, lines).map_err(IndexError::store(&path))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, IndexError> {
        let path = dir.join(format!("{stem}.manifest.json"));
        let text = fs::read_to_string(&path).map_err(IndexError::store(&path))?;
        let manifest: KeywordManifest = serde_json::from_str(&text).map_err(|e| IndexError::corrupt(&path, e))?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::corrupt(&path, "unsupported format version"));
        }
        let path = dir.join(format!("{stem}.postings.jsonl"));
        let lines: Vec<PostingLine> = jsonl::read_lines(&path).map_err(IndexError::store(&path))?;
        let postings = lines.into_iter().map(|l| (l.token, l.postings)).collect();
        Ok(Self {
            level: manifest.level,
            postings,
            chunk_docs: manifest.chunk_docs,
        })
    }
}

fn synonyms_for<'a>(keyword: &str, synonyms: &'a BTreeMap<String, Vec<String>>) -> impl Iterator<Item = &'a String> {
    let folded = keyword.to_lowercase();
    synonyms
        .iter()
        .filter(move |(k, _)| k.to_lowercase() == folded)
        .flat_map(|(_, v)| v.iter())
}

/// Scores each chunk by the fraction of keyword groups it matches. A group is a
/// keyword plus its synonyms and matches when any member occurs as a token
/// phrase. Chunks matching no group are never returned.
pub fn keyword_search(
    index: &KeywordIndex,
    keywords: &[String],
    synonyms: &BTreeMap<String, Vec<String>>,
    k: usize,
    channel: Channel,
) -> Result<Vec<RetrievalHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    let mut groups: Vec<&String> = Vec::new();
    for kw in keywords {
        if !kw.trim().is_empty() && !groups.iter().any(|g| g.to_lowercase() == kw.to_lowercase()) {
            groups.push(kw);
        }
    }
    if groups.is_empty() {
        return Err(IndexError::EmptyKeywords);
    }
    let mut matched: HashMap<&str, usize> = HashMap::new();
    for kw in &groups {
        let mut group_hits: BTreeSet<&str> = BTreeSet::new();
        for term in std::iter::once(*kw).chain(synonyms_for(kw, synonyms)) {
            group_hits.extend(index.phrase_matches(&tokenize(term)));
        }
        for chunk in group_hits {
            *matched.entry(chunk).or_default() += 1;
        }
    }
    let n = groups.len() as f64;
    let mut scored: Vec<(f64, &str)> = matched.into_iter().map(|(c, m)| (m as f64 / n, c)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (similarity, chunk))| RetrievalHit {
            chunk_id: chunk.to_string(),
            doc_id: index.chunk_docs[chunk].clone(),
            channel,
            similarity,
            rank: i + 1,
        })
        .collect())
}
