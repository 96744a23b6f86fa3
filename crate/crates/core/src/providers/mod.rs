//! Text generation and embedding contracts.
//!
//! Pipeline stages never talk to a model directly. They build a
//! [`GenerationRequest`] (role, prompt template id, a matching key and the
//! rendered prompt) and hand it to a [`ProviderHub`], which routes it to the
//! backend configured for that role. Backends are either HTTP endpoints
//! ([`http`]) or a [`ProviderScript`] replaying canned responses, in which case
//! every call is a pure function of the request.

mod embedding;
pub mod http;
mod script;
mod session;
pub mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embedding::{cosine_similarity, EmbeddingVector, HashingEmbedder};
pub use script::{ProviderScript, ScriptEntry, ScriptedGenerator, WILDCARD_KEY};
pub use session::{CallError, CallRecord, Session};
pub use templates::{PromptTemplates, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reasoner,
    DeepThinker,
    Judge,
    Extractor,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Reasoner, Role::DeepThinker, Role::Judge, Role::Extractor];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Reasoner => "reasoner",
            Role::DeepThinker => "deep_thinker",
            Role::Judge => "judge",
            Role::Extractor => "extractor",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| ProviderError::InvalidRequest(format!("unknown role {s:?}")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("no backend for role {0}")]
    NoBackend(Role),
    #[error("mock miss: no scripted response for role={role} template={template_id} key={key:?}")]
    MockMiss { role: Role, template_id: String, key: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity undefined for the zero vector")]
    ZeroVector,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider script: {0}")]
    Script(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// System and user parts of a chat-style prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn is_empty(&self) -> bool {
        self.system.trim().is_empty() && self.user.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub role: Role,
    /// Name of the prompt template the request was rendered from.
    pub template_id: String,
    /// Stage-specific key fields (question, chunk id, ...) used by scripted backends.
    pub key: String,
    pub prompt: Prompt,
    pub max_output: u32,
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn new(role: Role, template_id: impl Into<String>, key: impl Into<String>, prompt: Prompt) -> Self {
        Self {
            role,
            template_id: template_id.into(),
            key: key.into(),
            prompt,
            max_output: 1024,
            temperature: 0.0,
        }
    }

    pub fn with_max_output(mut self, max_output: u32) -> Self {
        self.max_output = max_output;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.is_empty() {
            return Err(ProviderError::InvalidRequest("empty prompt".into()));
        }
        if self.max_output == 0 {
            return Err(ProviderError::InvalidRequest("max_output must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// Identifies the model; indexes refuse queries from a different embedder.
    fn embedder_id(&self) -> &str;
    fn dims(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

impl<T: Generator + ?Sized> Generator for Arc<T> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        (**self).generate(req)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn embedder_id(&self) -> &str {
        (**self).embedder_id()
    }
    fn dims(&self) -> usize {
        (**self).dims()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        (**self).embed(text)
    }
}

/// Routes generation requests by role and owns the shared embedder.
#[derive(Clone)]
pub struct ProviderHub {
    generators: BTreeMap<Role, Arc<dyn Generator>>,
    embedder: Arc<dyn Embedder>,
}

impl ProviderHub {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            generators: BTreeMap::new(),
            embedder,
        }
    }

    pub fn with_generator(mut self, role: Role, generator: Arc<dyn Generator>) -> Self {
        self.generators.insert(role, generator);
        self
    }

    /// Serves every role from one scripted backend.
    pub fn scripted(script: ProviderScript, embedder: Arc<dyn Embedder>) -> Self {
        let generator: Arc<dyn Generator> = Arc::new(ScriptedGenerator::new(script));
        Role::ALL
            .into_iter()
            .fold(Self::new(embedder), |hub, role| hub.with_generator(role, generator.clone()))
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let backend = self.generators.get(&req.role).ok_or(ProviderError::NoBackend(req.role))?;
        let reply = backend.generate(req)?;
        if reply.trim().is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(reply)
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        self.embedder.embed(text)
    }
}

impl fmt::Debug for ProviderHub {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderHub")
            .field("roles", &self.generators.keys().collect::<Vec<_>>())
            .field("embedder", &self.embedder.embedder_id())
            .finish()
    }
}
