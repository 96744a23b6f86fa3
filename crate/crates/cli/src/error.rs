use std::path::PathBuf;

use serde::Serialize;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_ARTIFACT: i32 = 2;
pub const EXIT_INVALID_CONFIG: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing {artifact} at {}; run `ragweave {produced_by}` first", path.display())]
    MissingArtifact {
        artifact: &'static str,
        path: PathBuf,
        produced_by: &'static str,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Corpus(#[from] ragweave::corpus::CorpusError),
    #[error(transparent)]
    Index(#[from] ragweave::index::IndexError),
    #[error(transparent)]
    Kg(#[from] ragweave::kg::KgError),
    #[error(transparent)]
    Eval(#[from] ragweave::eval::EvalError),
    #[error(transparent)]
    Provider(#[from] ragweave::providers::ProviderError),
    #[error(transparent)]
    Template(#[from] ragweave::providers::TemplateError),
    #[error("{message} (partial trace written to {})", trace.display())]
    Pipeline { message: String, trace: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "invalid_config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Usage(_) => "usage",
            CliError::Corpus(_) => "corpus",
            CliError::Index(_) => "index",
            CliError::Kg(_) => "kg",
            CliError::Eval(_) => "eval",
            CliError::Provider(_) => "provider",
            CliError::Template(_) => "template",
            CliError::Pipeline { .. } => "pipeline",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Template(_) => EXIT_INVALID_CONFIG,
            CliError::MissingArtifact { .. } => EXIT_MISSING_ARTIFACT,
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }

    /// One JSON object on one line.
    pub fn to_json_line(&self) -> String {
        let line = ErrorLine {
            error: self.kind(),
            message: self.to_string().replace('\n', " "),
            exit_code: self.exit_code(),
        };
        serde_json::to_string(&line).expect("error line serializes")
    }
}
