//! Document ingestion and two-level chunking.
//!
//! Every document yields at most one abstract-level chunk (the whole abstract,
//! never windowed) and a run of full-text chunks produced by a word-based
//! sliding window over the markdown body. Chunk text is a verbatim slice of the
//! source, so headings, list markers, code fences and tables survive as-is.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus source {path}: {source}")]
    Unreadable { path: PathBuf, source: io::Error },
    #[error("document {0} has neither abstract nor body text")]
    EmptyDocument(String),
    #[error("invalid chunk policy: {0}")]
    InvalidPolicy(String),
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    Empty,
    #[error("corpus store {path}: {source}")]
    Store { path: PathBuf, source: io::Error },
}

/// One source paper. Field names follow the line-delimited input schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(rename = "body_markdown", default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(rename = "citations", default, skip_serializing_if = "Vec::is_empty")]
    pub cited_doc_ids: Vec<String>,
}

impl Document {
    pub fn has_text(&self) -> bool {
        !self.abstract_text.trim().is_empty() || !self.body.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChunkLevel {
    Abstract,
    FullText,
}

impl fmt::Display for ChunkLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChunkLevel::Abstract => "abstract",
            ChunkLevel::FullText => "fulltext",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub level: ChunkLevel,
    pub text: String,
    pub ordinal: usize,
}

/// Deterministic chunk address: `<doc_id>::abs` or `<doc_id>::ft<ordinal>`.
pub fn chunk_id(doc_id: &str, level: ChunkLevel, ordinal: usize) -> String {
    match level {
        ChunkLevel::Abstract => format!("{doc_id}::abs"),
        ChunkLevel::FullText => format!("{doc_id}::ft{ordinal:04}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkPolicy {
    pub target_words: usize,
    pub overlap_words: usize,
    pub paragraph_aligned: bool,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            target_words: 300,
            overlap_words: 50,
            paragraph_aligned: true,
        }
    }
}

impl ChunkPolicy {
    pub fn new(target_words: usize, overlap_words: usize, paragraph_aligned: bool) -> Result<Self, CorpusError> {
        let policy = Self {
            target_words,
            overlap_words,
            paragraph_aligned,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.target_words == 0 {
            return Err(CorpusError::InvalidPolicy("target_words must be positive".into()));
        }
        if self.overlap_words >= self.target_words {
            return Err(CorpusError::InvalidPolicy(format!(
                "overlap_words ({}) must be below target_words ({})",
                self.overlap_words, self.target_words
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct WordSpan {
    start: usize,
    end: usize,
    /// A blank line separates this word from the previous one.
    opens_paragraph: bool,
}

fn word_spans(text: &str) -> Vec<WordSpan> {
    let mut spans = Vec::new();
    let mut newlines_in_gap = 0usize;
    let mut current: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(start) = current.take() {
                let opens_paragraph = !spans.is_empty() && newlines_in_gap >= 2;
                spans.push(WordSpan {
                    start,
                    end: i,
                    opens_paragraph,
                });
                newlines_in_gap = 0;
            }
            if ch == '\n' {
                newlines_in_gap += 1;
            }
        } else if current.is_none() {
            current = Some(i);
        }
    }
    if let Some(start) = current {
        let opens_paragraph = !spans.is_empty() && newlines_in_gap >= 2;
        spans.push(WordSpan {
            start,
            end: text.len(),
            opens_paragraph,
        });
    }
    spans
}

/// Word ranges `[start, end)` of each full-text window.
fn window_ranges(words: &[WordSpan], policy: &ChunkPolicy) -> Vec<(usize, usize)> {
    let n = words.len();
    let mut ranges = Vec::new();
    if n == 0 {
        return ranges;
    }
    let mut start = 0;
    loop {
        let mut end = (start + policy.target_words).min(n);
        if end < n && policy.paragraph_aligned {
            // Snap back to the last paragraph start that still leaves the next
            // window strictly ahead of this one.
            if let Some(b) = (start + policy.overlap_words + 1..=end)
                .rev()
                .find(|&b| words[b].opens_paragraph)
            {
                end = b;
            }
        }
        ranges.push((start, end));
        if end >= n {
            break;
        }
        start = end - policy.overlap_words;
    }
    ranges
}

/// Splits one document into its abstract chunk and full-text windows.
pub fn chunk_document(doc: &Document, policy: &ChunkPolicy) -> Result<Vec<Chunk>, CorpusError> {
    policy.validate()?;
    if !doc.has_text() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }
    let mut chunks = Vec::new();
    let abstract_text = doc.abstract_text.trim();
    if !abstract_text.is_empty() {
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, ChunkLevel::Abstract, 0),
            doc_id: doc.doc_id.clone(),
            level: ChunkLevel::Abstract,
            text: abstract_text.to_string(),
            ordinal: 0,
        });
    }
    let words = word_spans(&doc.body);
    for (ordinal, (start, end)) in window_ranges(&words, policy).into_iter().enumerate() {
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, ChunkLevel::FullText, ordinal),
            doc_id: doc.doc_id.clone(),
            level: ChunkLevel::FullText,
            text: doc.body[words[start].start..words[end - 1].end].to_string(),
            ordinal,
        });
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    /// One JSON object per line in a single file.
    Jsonl,
    /// A directory of `<id>.json` files.
    JsonDir,
}

impl SourceFormat {
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            SourceFormat::JsonDir
        } else {
            SourceFormat::Jsonl
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// `file:line` for JSONL sources, the file name for directory sources.
    pub record: String,
    pub doc_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_seen: usize,
    pub documents: usize,
    pub rejections: Vec<Rejection>,
}

/// Reads documents from `source`, rejecting duplicates (the later record loses),
/// unparseable records and records with no text.
pub fn ingest_corpus(source: &Path, format: SourceFormat) -> Result<(Vec<Document>, IngestReport), CorpusError> {
    let unreadable = |e| CorpusError::Unreadable {
        path: source.to_path_buf(),
        source: e,
    };
    let mut raw: Vec<(String, String)> = Vec::new();
    match format {
        SourceFormat::Jsonl => {
            let content = fs::read_to_string(source).map_err(unreadable)?;
            let name = source.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            for (n, line) in content.lines().enumerate() {
                if !line.trim().is_empty() {
                    raw.push((format!("{name}:{}", n + 1), line.to_string()));
                }
            }
        }
        SourceFormat::JsonDir => {
            let mut files: Vec<PathBuf> = fs::read_dir(source)
                .map_err(unreadable)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for file in files {
                let content = fs::read_to_string(&file).map_err(|e| CorpusError::Unreadable {
                    path: file.clone(),
                    source: e,
                })?;
                let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                raw.push((name, content));
            }
        }
    }

    let mut report = IngestReport {
        records_seen: raw.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (record, body) in raw {
        let doc: Document = match serde_json::from_str(&body) {
            Ok(doc) => doc,
            Err(e) => {
                report.rejections.push(Rejection {
                    record,
                    doc_id: None,
                    reason: format!("unparseable record: {e}"),
                });
                continue;
            }
        };
        let reason = if doc.doc_id.trim().is_empty() {
            Some("empty id".to_string())
        } else if seen.contains(&doc.doc_id) {
            Some(format!("duplicate id {}", doc.doc_id))
        } else if !doc.has_text() {
            Some("missing both abstract and body".to_string())
        } else {
            None
        };
        match reason {
            Some(reason) => report.rejections.push(Rejection {
                record,
                doc_id: Some(doc.doc_id),
                reason,
            }),
            None => {
                seen.insert(doc.doc_id.clone());
                docs.push(doc);
            }
        }
    }
    report.documents = docs.len();
    Ok((docs, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusManifest {
    format_version: u32,
    policy: ChunkPolicy,
    documents: usize,
    chunks: usize,
}

const CORPUS_FORMAT_VERSION: u32 = 1;

/// An immutable, chunked corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    policy: ChunkPolicy,
    documents: Vec<Document>,
    chunks: Vec<Chunk>,
    doc_pos: HashMap<String, usize>,
    chunk_pos: HashMap<String, usize>,
}

impl Corpus {
    pub fn build(documents: Vec<Document>, policy: ChunkPolicy) -> Result<Self, CorpusError> {
        policy.validate()?;
        if documents.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut doc_pos = HashMap::new();
        let mut chunks = Vec::new();
        for (i, doc) in documents.iter().enumerate() {
            if doc_pos.insert(doc.doc_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(doc.doc_id.clone()));
            }
            chunks.extend(chunk_document(doc, &policy)?);
        }
        Ok(Self::assemble(policy, documents, chunks, doc_pos))
    }

    fn assemble(policy: ChunkPolicy, documents: Vec<Document>, chunks: Vec<Chunk>, doc_pos: HashMap<String, usize>) -> Self {
        let chunk_pos = chunks.iter().enumerate().map(|(i, c)| (c.chunk_id.clone(), i)).collect();
        Self {
            policy,
            documents,
            chunks,
            doc_pos,
            chunk_pos,
        }
    }

    pub fn policy(&self) -> &ChunkPolicy {
        &self.policy
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunks_at(&self, level: ChunkLevel) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter().filter(move |c| c.level == level)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.doc_pos.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunk_pos.get(chunk_id).map(|&i| &self.chunks[i])
    }

    /// Full-text chunk count per document, in document order.
    pub fn fulltext_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = self.documents.iter().map(|d| (d.doc_id.as_str(), 0)).collect();
        for c in self.chunks_at(ChunkLevel::FullText) {
            *counts.entry(c.doc_id.as_str()).or_default() += 1;
        }
        counts
    }

    /// Writes `corpus.json`, `documents.jsonl` and `chunks.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        let store = |path: &Path| {
            let path = path.to_path_buf();
            move |e| CorpusError::Store { path, source: e }
        };
        fs::create_dir_all(dir).map_err(store(dir))?;
        let manifest = CorpusManifest {
            format_version: CORPUS_FORMAT_VERSION,
            policy: self.policy,
            documents: self.documents.len(),
            chunks: self.chunks.len(),
        };
        let manifest_path = dir.join("corpus.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, text + "\n").map_err(store(&manifest_path))?;
        let docs_path = dir.join("documents.jsonl");
        jsonl::write_lines(&docs_path, &self.documents).map_err(store(&docs_path))?;
        let chunks_path = dir.join("chunks.jsonl");
        jsonl::write_lines(&chunks_path, &self.chunks).map_err(store(&chunks_path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let store = |path: PathBuf| move |e| CorpusError::Store { path, source: e };
        let manifest_path = dir.join("corpus.json");
        let text = fs::read_to_string(&manifest_path).map_err(store(manifest_path.clone()))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            .map_err(store(manifest_path.clone()))?;
        if manifest.format_version != CORPUS_FORMAT_VERSION {
            return Err(CorpusError::Store {
                path: manifest_path,
                source: io::Error::new(io::ErrorKind::InvalidData, "unsupported corpus format version"),
            });
        }
        let docs_path = dir.join("documents.jsonl");
        let documents: Vec<Document> = jsonl::read_lines(&docs_path).map_err(store(docs_path))?;
        let chunks_path = dir.join("chunks.jsonl");
        let chunks: Vec<Chunk> = jsonl::read_lines(&chunks_path).map_err(store(chunks_path.clone()))?;
        if documents.len() != manifest.documents || chunks.len() != manifest.chunks {
            return Err(CorpusError::Store {
                path: chunks_path,
                source: io::Error::new(io::ErrorKind::InvalidData, "record counts disagree with corpus.json"),
            });
        }
        let mut doc_pos = HashMap::new();
        for (i, d) in documents.iter().enumerate() {
            if doc_pos.insert(d.doc_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(d.doc_id.clone()));
            }
        }
        Ok(Self::assemble(manifest.policy, documents, chunks, doc_pos))
    }
}
