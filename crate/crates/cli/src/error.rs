// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration value that parses but violates a constraint.
    #[error("{file}: {field}: {reason}")]
    Config { file: String, field: String, reason: String },
    #[error("{file}: {reason}")]
    Parse { file: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// Refusal to replace a file already present in the run directory.
    #[error("{0} already exists; outputs are append-only, choose a fresh --out")]
    Exists(String),
    /// Bad command-line arguments.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] chirpmem::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(file: &str, field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config { file: file.to_string(), field: field.into(), reason: reason.into() }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl CliError {
    /// Process exit status: 2 for invalid input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Parse { .. } | CliError::Usage(_) | CliError::Exists(_) => 2,
            CliError::Core(
                chirpmem::Error::InvalidParameter { .. }
                | chirpmem::Error::Overlap { .. }
                | chirpmem::Error::UnknownMode(_)
                | chirpmem::Error::Program { .. }
                | chirpmem::Error::Parse { .. }
                | chirpmem::Error::Unit(_)
                | chirpmem::Error::WindowOverflow(_),
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
