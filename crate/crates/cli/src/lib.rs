//! Scenario-driven front end for `gdtn-core`.
//!
//! Each subcommand is a pure function from a scenario (plus flags) to an
//! [`Outcome`]: the text for stdout and the files to write. `main` only does
//! the I/O.

pub mod commands;
pub mod scenario;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("scenario has no `{0}` section")]
    MissingSection(&'static str),
    #[error("{0}")]
    Domain(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for failures of the model itself, 2 for unusable input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Schema { .. } | CliError::MissingSection(_) => 2,
            CliError::Domain(_) | CliError::Write { .. } => 1,
        }
    }

    pub(crate) fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    /// Paths relative to the `--out` directory.
    pub files: Vec<(PathBuf, String)>,
    pub code: u8,
}

impl Outcome {
    pub fn print(stdout: String) -> Self {
        Self {
            stdout,
            ..Self::default()
        }
    }

    /// Writes every file under `dir`, creating directories as needed.
    pub fn write_files(&self, dir: &Path) -> Result<(), CliError> {
        for (rel, contents) in &self.files {
            let path = dir.join(rel);
            let wrap = |source| CliError::Write {
                path: path.clone(),
                source,
            };
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(wrap)?;
            }
            std::fs::write(&path, contents).map_err(wrap)?;
        }
        Ok(())
    }
}
