use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Channel, IndexError, RetrievalHit, INDEX_FORMAT_VERSION};
use crate::corpus::{Chunk, ChunkLevel};
use crate::jsonl;
use crate::providers::{cosine_similarity, Embedder, EmbeddingVector};

/// Brute-force cosine index over one chunk level.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    level: ChunkLevel,
    embedder_id: String,
    dims: usize,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RowId {
    chunk_id: String,
    doc_id: String,
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    id: RowId,
    vector: EmbeddingVector,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorManifest {
    format_version: u32,
    level: ChunkLevel,
    embedder_id: String,
    dims: usize,
    entries: usize,
}

impl VectorIndex {
    pub fn level(&self) -> ChunkLevel {
        self.level
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.id.chunk_id.as_str())
    }

    pub fn vector(&self, chunk_id: &str) -> Option<&EmbeddingVector> {
        self.rows.iter().find(|r| r.id.chunk_id == chunk_id).map(|r| &r.vector)
    }

    /// Writes `<stem>.manifest.json`, `<stem>.f32` (row-major little-endian
    /// floats) and `<stem>.ids.jsonl` (row order).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), IndexError> {
        let manifest = VectorManifest {
            format_version: INDEX_FORMAT_VERSION,
            level: self.level,
            embedder_id: self.embedder_id.clone(),
            dims: self.dims,
            entries: self.rows.len(),
        };
        let path = dir.join(format!("{stem}.manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(IndexError::store(&path))?;

        let mut bytes = Vec::with_capacity(self.rows.len() * self.dims * 4);
        for row in &self.rows {
            for v in row.vector.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let path = dir.join(format!("{stem}.f32"));
        fs::write(&path, bytes).map_err(IndexError::store(&path))?;

        let path = dir.join(format!("{stem}.ids.jsonl"));
        jsonl::write_lines(&path, self.rows.iter().map(|r| &r.id)).map_err(IndexError::store(&path))?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, IndexError> {
        let path = dir.join(format!("{stem}.manifest.json"));
        let text = fs::read_to_string(&path).map_err(IndexError::store(&path))?;
        let manifest: VectorManifest = serde_json::from_str(&text).map_err(|e| IndexError::corrupt(&path, e))?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::corrupt(&path, "unsupported format version"));
        }
        let path = dir.join(format!("{stem}.ids.jsonl"));
        let ids: Vec<RowId> = jsonl::read_lines(&path).map_err(IndexError::store(&path))?;
        let path = dir.join(format!("{stem}.f32"));
        let bytes = fs::read(&path).map_err(IndexError::store(&path))?;
        if ids.len() != manifest.entries || bytes.len() != manifest.entries * manifest.dims * 4 {
            return Err(IndexError::corrupt(&path, "entry count disagrees with manifest"));
        }
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let rows = ids
            .into_iter()
            .zip(floats.chunks_exact(manifest.dims.max(1)))
            .map(|(id, v)| Row {
                id,
                vector: EmbeddingVector::from_unit(v.to_vec()),
            })
            .collect();
        Ok(Self {
            level: manifest.level,
            embedder_id: manifest.embedder_id,
            dims: manifest.dims,
            rows,
        })
    }
}

/// Embeds every chunk of one level. Embedding runs in parallel; row order
/// follows the input order.
pub fn build_vector_index(chunks: &[&Chunk], level: ChunkLevel, embedder: &dyn Embedder) -> Result<VectorIndex, IndexError> {
    if chunks.is_empty() {
        return Err(IndexError::EmptyChunks);
    }
    let mut seen = HashSet::new();
    for c in chunks {
        if c.level != level {
            return Err(IndexError::LevelMismatch {
                chunk_id: c.chunk_id.clone(),
                expected: level,
                found: c.level,
            });
        }
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(IndexError::DuplicateChunk(c.chunk_id.clone()));
        }
    }
    let vectors: Vec<EmbeddingVector> = chunks
        .par_iter()
        .map(|c| embedder.embed(&c.text))
        .collect::<Result<_, _>>()?;
    let dims = embedder.dims();
    if let Some(v) = vectors.iter().find(|v| v.dims() != dims) {
        return Err(IndexError::Provider(crate::providers::ProviderError::DimensionMismatch {
            left: dims,
            right: v.dims(),
        }));
    }
    let rows = chunks
        .iter()
        .zip(vectors)
        .map(|(c, vector)| Row {
            id: RowId {
                chunk_id: c.chunk_id.clone(),
                doc_id: c.doc_id.clone(),
            },
            vector,
        })
        .collect();
    Ok(VectorIndex {
        level,
        embedder_id: embedder.embedder_id().to_string(),
        dims,
        rows,
    })
}

/// Exact top-k by cosine similarity. Negative similarities are clamped to 0;
/// ties go to the smaller chunk id.
pub fn vector_search(
    index: &VectorIndex,
    query_text: &str,
    k: usize,
    embedder: &dyn Embedder,
    channel: Channel,
) -> Result<Vec<RetrievalHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    if embedder.embedder_id() != index.embedder_id {
        return Err(IndexError::EmbedderMismatch {
            index: index.embedder_id.clone(),
            query: embedder.embedder_id().to_string(),
        });
    }
    let query = embedder.embed(query_text)?;
    let mut scored: Vec<(f64, &RowId)> = index
        .rows
        .iter()
        .map(|row| {
            let sim = match cosine_similarity(&query, &row.vector) {
                Ok(s) => s.max(0.0),
                Err(crate::providers::ProviderError::ZeroVector) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((sim, &row.id))
        })
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.chunk_id.cmp(&b.1.chunk_id)));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (similarity, id))| RetrievalHit {
            chunk_id: id.chunk_id.clone(),
            doc_id: id.doc_id.clone(),
            channel,
            similarity,
            rank: i + 1,
        })
        .collect())
}
