//! Error type shared across the pipeline, tagged with the stage that failed.

use thiserror::Error;

/// Pipeline stage used in error messages and exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Kb,
    Metafeatures,
    Retrieval,
    Surrogate,
    Attribution,
    Insights,
    Optimizer,
    Benchgen,
    Cli,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Kb => "kb",
            Stage::Metafeatures => "metafeatures",
            Stage::Retrieval => "retrieval",
            Stage::Surrogate => "surrogate",
            Stage::Attribution => "attribution",
            Stage::Insights => "insights",
            Stage::Optimizer => "optimizer",
            Stage::Benchgen => "benchgen",
            Stage::Cli => "cli",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: files, flags, schema violations, precondition failures.
    #[error("[{stage}] {message}")]
    Validation { stage: Stage, message: String },

    /// Internal failure on valid input (numerical breakdown, I/O mid-write).
    #[error("[{stage}] {message}")]
    Runtime { stage: Stage, message: String },

    #[error("[{stage}] {path}: {source}")]
    Io {
        stage: Stage,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(stage: Stage, message: impl Into<String>) -> Self {
        Error::Validation {
            stage,
            message: message.into(),
        }
    }

    pub fn runtime(stage: Stage, message: impl Into<String>) -> Self {
        Error::Runtime {
            stage,
            message: message.into(),
        }
    }

    pub fn io(stage: Stage, path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            stage,
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than internal failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Io { .. })
    }

    pub fn stage(&self) -> Stage {
        match self {
            Error::Validation { stage, .. } | Error::Runtime { stage, .. } | Error::Io { stage, .. } => *stage,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
