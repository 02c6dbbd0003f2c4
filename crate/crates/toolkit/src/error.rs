use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::pnm::ParseError;

/// Everything a command can fail with, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum ToolkitError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("{}: {message}", path.display())]
    Document { path: PathBuf, message: String },
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        source: irf_core::Error,
    },
}

impl ToolkitError {
    pub fn core(stage: &'static str) -> impl FnOnce(irf_core::Error) -> Self {
        move |source| ToolkitError::Core { stage, source }
    }

    /// 1 usage, 2 input parse, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ToolkitError::Usage(_) | ToolkitError::Config(_) | ToolkitError::Write { .. } => 1,
            ToolkitError::Parse { .. }
            | ToolkitError::Document { .. }
            | ToolkitError::Read { .. } => 2,
            ToolkitError::Core { source, .. } => {
                if source.is_numeric() {
                    3
                } else {
                    1
                }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, ToolkitError>;
