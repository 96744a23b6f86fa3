//! Command-line wiring: config loading, provider selection and artifact
//! persistence for each pipeline stage.

pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ragweave::corpus::SourceFormat;
use ragweave::kg::ExportFormat;

pub use commands::Context;
pub use config::EngineConfig;
pub use error::{CliError, EXIT_FAILURE, EXIT_INVALID_CONFIG, EXIT_MISSING_ARTIFACT, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "ragweave", version, about = "Multi-channel retrieval, progressive answering and literature graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Serve every provider call from this script (line-delimited JSON).
    #[arg(long, global = true)]
    pub mock_script: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IngestFormat {
    Jsonl,
    Dir,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KgExportFormat {
    Jsonl,
    Cypher,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw documents and persist the chunked corpus.
    Ingest {
        source: PathBuf,
        /// Detected from the path when omitted.
        #[arg(long, value_enum)]
        format: Option<IngestFormat>,
    },
    /// Build vector and keyword indexes for the persisted corpus.
    Index,
    /// Answer one question and write its trace.
    Ask {
        question: String,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the pipeline over a dataset and write metric reports.
    Eval {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Knowledge-graph construction and export.
    #[command(subcommand)]
    Kg(KgCommand),
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Extract, normalize and persist the graph.
    Build,
    /// Export the persisted graph.
    Export {
        #[arg(long, value_enum, default_value = "jsonl")]
        format: KgExportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Loads the config named by `--config` (or the defaults) and applies flag
/// overrides.
pub fn load_context(global: &GlobalArgs) -> Result<Context, CliError> {
    let config = match &global.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if global.workers == Some(0) {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    Ok(Context::new(config, global.mock_script.clone()))
}

/// Executes one command and returns what it prints on stdout.
pub fn run(ctx: &Context, command: &Command) -> Result<String, CliError> {
    Ok(match command {
        Command::Ingest { source, format } => {
            let format = format.map(|f| match f {
                IngestFormat::Jsonl => SourceFormat::Jsonl,
                IngestFormat::Dir => SourceFormat::JsonDir,
            });
            let s = commands::cmd_ingest(ctx, source, format)?;
            format!("ingested {} documents, {} chunks, {} rejected", s.documents, s.chunks, s.rejected)
        }
        Command::Index => {
            let dir = commands::cmd_index(ctx)?;
            format!("indexes written to {}", dir.display())
        }
        Command::Ask { question, trace } => {
            let (trace, _) = commands::cmd_ask(ctx, question, trace.as_deref())?;
            trace.final_answer.unwrap_or_default()
        }
        Command::Eval { dataset, out } => {
            let (report, _) = commands::cmd_eval(ctx, dataset, out.as_deref())?;
            ragweave::eval::render_table(&report).trim_end().to_string()
        }
        Command::Kg(KgCommand::Build) => {
            let r = commands::cmd_kg_build(ctx)?;
            format!(
                "graph built: {} nodes, {} edges, {} document failures",
                r.nodes,
                r.edges,
                r.failures.len()
            )
        }
        Command::Kg(KgCommand::Export { format, out }) => {
            let format = match format {
                KgExportFormat::Jsonl => ExportFormat::NodesEdgesJsonl,
                KgExportFormat::Cypher => ExportFormat::GraphScript,
            };
            let files = commands::cmd_kg_export(ctx, format, out.as_deref())?;
            files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join("\n")
        }
    })
}
