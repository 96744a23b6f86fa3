//! Multi-channel retrieval, progressive answer generation, and dual-layer
//! knowledge-graph construction over a corpus of research papers.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: document ingestion and abstract/full-text chunking
//! - [`providers`]: text generation and embedding contracts, scripted mocks,
//!   HTTP backends and prompt templates
//! - [`index`]: exact dense vector indexes and the synonym-expanding keyword index
//! - [`retrieval`]: pre-retrieval reasoning, six-channel fan-out and the
//!   weighted-normalization aggregator
//! - [`generation`]: relevance scan, draft, self-reflection, deep thinking
//! - [`kg`]: entity-level and document-level graph construction, queries, export
//! - [`eval`]: retrieval/answer metrics and the evaluation harness
//!
//! Every model call goes through [`providers::Generator`] or
//! [`providers::Embedder`], so the whole pipeline runs offline and
//! deterministically against a [`providers::ProviderScript`].

pub mod corpus;
pub mod eval;
pub mod generation;
pub mod index;
pub mod kg;
pub mod providers;
pub mod retrieval;
pub mod text;

mod jsonl;

pub use corpus::{Chunk, ChunkLevel, ChunkPolicy, Corpus, Document};
pub use generation::{AnswerTrace, Engine, GenerationConfig, PipelineVariant};
pub use index::{IndexSet, KeywordIndex, RetrievalHit, VectorIndex};
pub use kg::{KnowledgeGraph, Triple};
pub use providers::{EmbeddingVector, Embedder, GenerationRequest, Generator, ProviderHub, Role};
pub use retrieval::{AggregatedCandidate, AggregatorWeights, PreRetrievalOutput};
