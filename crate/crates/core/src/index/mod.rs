//! Exact dense vector indexes and a positional keyword index, one of each per
//! chunk level.

mod keyword;
mod vector;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use keyword::{keyword_search, KeywordIndex};
pub use vector::{build_vector_index, vector_search, VectorIndex};

use crate::corpus::{ChunkLevel, Corpus};
use crate::providers::{Embedder, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot build an index from an empty chunk list")]
    EmptyChunks,
    #[error("chunk {chunk_id} is {found}-level, index is {expected}-level")]
    LevelMismatch {
        chunk_id: String,
        expected: ChunkLevel,
        found: ChunkLevel,
    },
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(String),
    #[error("embedder mismatch: index built with {index}, query uses {query}")]
    EmbedderMismatch { index: String, query: String },
    #[error("k must be positive")]
    ZeroK,
    #[error("keyword list is empty")]
    EmptyKeywords,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("index store {path}: {source}")]
    Store { path: PathBuf, source: io::Error },
    #[error("corrupt index {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

impl IndexError {
    pub(crate) fn store(path: &Path) -> impl FnOnce(io::Error) -> IndexError + '_ {
        move |source| IndexError::Store {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn corrupt(path: &Path, message: impl fmt::Display) -> IndexError {
        IndexError::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub(crate) const INDEX_FORMAT_VERSION: u32 = 1;

/// One retrieval run: (query granularity) × (chunk level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    QuestionAbstract,
    QuestionFullText,
    VirtualAnswerAbstract,
    VirtualAnswerFullText,
    KeywordAbstract,
    KeywordFullText,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::QuestionAbstract,
        Channel::QuestionFullText,
        Channel::VirtualAnswerAbstract,
        Channel::VirtualAnswerFullText,
        Channel::KeywordAbstract,
        Channel::KeywordFullText,
    ];

    pub fn level(&self) -> ChunkLevel {
        match self {
            Channel::QuestionAbstract | Channel::VirtualAnswerAbstract | Channel::KeywordAbstract => ChunkLevel::Abstract,
            _ => ChunkLevel::FullText,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub doc_id: String,
    pub channel: Channel,
    /// Cosine similarity clamped to [0, 1], or the keyword-group match fraction.
    pub similarity: f64,
    /// 1-based within the channel.
    pub rank: usize,
}

/// The four indexes a question is retrieved against.
#[derive(Debug, Clone)]
pub struct IndexSet {
    pub abstract_vectors: VectorIndex,
    pub fulltext_vectors: VectorIndex,
    pub abstract_keywords: KeywordIndex,
    pub fulltext_keywords: KeywordIndex,
}

impl IndexSet {
    pub fn build(corpus: &Corpus, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        let abstracts: Vec<_> = corpus.chunks_at(ChunkLevel::Abstract).collect();
        let fulltext: Vec<_> = corpus.chunks_at(ChunkLevel::FullText).collect();
        Ok(Self {
            abstract_vectors: build_vector_index(&abstracts, ChunkLevel::Abstract, embedder)?,
            fulltext_vectors: build_vector_index(&fulltext, ChunkLevel::FullText, embedder)?,
            abstract_keywords: KeywordIndex::build(&abstracts, ChunkLevel::Abstract)?,
            fulltext_keywords: KeywordIndex::build(&fulltext, ChunkLevel::FullText)?,
        })
    }

    pub fn vectors(&self, level: ChunkLevel) -> &VectorIndex {
        match level {
            ChunkLevel::Abstract => &self.abstract_vectors,
            ChunkLevel::FullText => &self.fulltext_vectors,
        }
    }

    pub fn keywords(&self, level: ChunkLevel) -> &KeywordIndex {
        match level {
            ChunkLevel::Abstract => &self.abstract_keywords,
            ChunkLevel::FullText => &self.fulltext_keywords,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        std::fs::create_dir_all(dir).map_err(IndexError::store(dir))?;
        for level in [ChunkLevel::Abstract, ChunkLevel::FullText] {
            self.vectors(level).save(dir, &format!("vectors.{level}"))?;
            self.keywords(level).save(dir, &format!("keywords.{level}"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        Ok(Self {
            abstract_vectors: VectorIndex::load(dir, "vectors.abstract")?,
            fulltext_vectors: VectorIndex::load(dir, "vectors.fulltext")?,
            abstract_keywords: KeywordIndex::load(dir, "keywords.abstract")?,
            fulltext_keywords: KeywordIndex::load(dir, "keywords.fulltext")?,
        })
    }

    /// True when the manifest files `load` needs are all present.
    pub fn exists(dir: &Path) -> bool {
        ["vectors.abstract", "vectors.fulltext", "keywords.abstract", "keywords.fulltext"]
            .iter()
            .all(|stem| dir.join(format!("{stem}.manifest.json")).is_file())
    }
}
