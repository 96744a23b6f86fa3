//! Two-layer knowledge graph: biomedical entity triples extracted from
//! abstracts, and paper-level metadata (methods, datasets, research
//! directions) linked across documents.

mod build;
mod export;
mod extract;
mod graph;
mod normalize;
mod query;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::providers::{CallError, ProviderError};

pub use build::{build_graph, KgBuildConfig, KgBuildReport};
pub use export::{export_graph, graph_script, import_graph, ExportFormat, EDGES_FILE, NODES_FILE, SCRIPT_FILE};
pub use extract::{extract_doc_meta, extract_triples, parse_meta_reply, parse_triples_reply, DocMeta, Extraction};
pub use graph::{GraphEdge, GraphNode, KnowledgeGraph, MutationReport, PaperLink};
pub use normalize::{
    canonicalize_incremental, normalize_entity, rename_entries, CanonEntry, CanonOutcome, CanonRegistry, Lexicon,
    LexiconCandidate, LexiconTerm, Normalization,
};
pub use query::{query_paths, query_subgraph, Direction, GraphPath, Subgraph};

pub const USES_METHOD: &str = "usesMethod";
pub const USES_DATASET: &str = "usesDataset";
pub const IN_DIRECTION: &str = "inDirection";
pub const SHARES_ENTITY: &str = "sharesEntity";
pub const SHARES_METHOD: &str = "sharesMethod";
pub const SHARES_DATASET: &str = "sharesDataset";
pub const CITES: &str = "cites";

/// Relations the graph itself produces; always accepted.
pub const STRUCTURAL_RELATIONS: [&str; 7] =
    [USES_METHOD, USES_DATASET, IN_DIRECTION, SHARES_ENTITY, SHARES_METHOD, SHARES_DATASET, CITES];

pub const DEFAULT_RELATIONS: [&str; 8] = [
    "treats",
    "inhibits",
    "promotes",
    "associated_with",
    "interacts_with",
    "targets",
    "biomarker_for",
    "regulates",
];

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("relation {0:?} is not in the vocabulary")]
    UnknownRelation(String),
    #[error("self-loop on {0} is not allowed")]
    SelfLoop(String),
    #[error("unknown entity type {0:?}")]
    UnknownEntityType(String),
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("lexicon {path}:{line}: {message}")]
    Lexicon { path: String, line: usize, message: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("graph is empty")]
    EmptyGraph,
    #[error("{path}: {source}")]
    Store {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Call(#[from] CallError),
}

impl KgError {
    pub(crate) fn store(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> KgError + '_ {
        move |source| KgError::Store {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    Gene,
    Protein,
    Drug,
    Disease,
    Paper,
    Method,
    Dataset,
    ResearchDirection,
}

impl EntityType {
    pub const BIOMEDICAL: [EntityType; 4] = [EntityType::Gene, EntityType::Protein, EntityType::Drug, EntityType::Disease];
    pub const ALL: [EntityType; 8] = [
        EntityType::Gene,
        EntityType::Protein,
        EntityType::Drug,
        EntityType::Disease,
        EntityType::Paper,
        EntityType::Method,
        EntityType::Dataset,
        EntityType::ResearchDirection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Gene => "Gene",
            EntityType::Protein => "Protein",
            EntityType::Drug => "Drug",
            EntityType::Disease => "Disease",
            EntityType::Paper => "Paper",
            EntityType::Method => "Method",
            EntityType::Dataset => "Dataset",
            EntityType::ResearchDirection => "ResearchDirection",
        }
    }

    pub fn is_biomedical(&self) -> bool {
        Self::BIOMEDICAL.contains(self)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EntityType {
    type Err = KgError;

    /// Case-insensitive; also accepts `research_direction` / `research direction`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str().to_lowercase() == folded)
            .ok_or_else(|| KgError::UnknownEntityType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub surface: String,
    pub entity_type: EntityType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_name: Option<String>,
}

impl EntityRef {
    pub fn new(surface: impl Into<String>, entity_type: EntityType) -> Self {
        Self {
            surface: surface.into(),
            entity_type,
            canonical_id: None,
            canonical_name: None,
        }
    }

    pub fn paper(doc_id: &str) -> Self {
        Self::new(doc_id, EntityType::Paper)
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical_name.is_some()
    }

    /// Canonical name when known, else the surface form.
    pub fn display_name(&self) -> &str {
        self.canonical_name.as_deref().unwrap_or(&self.surface)
    }

    /// Graph key: papers by doc id, everything else by type and case-folded name.
    pub fn node_id(&self) -> String {
        node_id(self.entity_type, self.display_name())
    }
}

pub fn node_id(entity_type: EntityType, name: &str) -> String {
    let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
    match entity_type {
        EntityType::Paper => format!("Paper:{name}"),
        t => format!("{t}:{}", name.to_lowercase()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityRef,
    pub relation: String,
    pub tail: EntityRef,
    pub provenance_doc_id: String,
}

/// Accepted relation labels. Structural relations are always accepted on top
/// of the configured set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVocabulary {
    relations: BTreeSet<String>,
    #[serde(default)]
    allow_self_loops: bool,
}

impl Default for RelationVocabulary {
    fn default() -> Self {
        Self::new(DEFAULT_RELATIONS)
    }
}

impl RelationVocabulary {
    pub fn new<I, S>(relations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            relations: relations.into_iter().map(Into::into).collect(),
            allow_self_loops: false,
        }
    }

    pub fn with_self_loops(mut self, allow: bool) -> Self {
        self.allow_self_loops = allow;
        self
    }

    pub fn allows_self_loops(&self) -> bool {
        self.allow_self_loops
    }

    /// Configured (extractable) relations only.
    pub fn configured(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.relations.contains(relation) || STRUCTURAL_RELATIONS.contains(&relation)
    }

    /// Matches an extracted label to a configured relation, ignoring case and
    /// treating spaces and hyphens as underscores.
    pub fn resolve(&self, label: &str) -> Option<&str> {
        let folded = label.trim().to_lowercase().replace([' ', '-'], "_");
        self.relations
            .iter()
            .find(|r| r.to_lowercase() == folded)
            .map(String::as_str)
    }
}
