use std::path::{Path, PathBuf};
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{}", location(path.as_deref(), *line), message)]
    Config {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("non-finite value in {table} column `{column}`")]
    NonFinite { table: &'static str, column: String },
    #[error("solver failed: {0}")]
    Solver(#[from] admm_trajopt::Error),
}

fn location(path: Option<&Path>, line: Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{l}: ", p.display()),
        (Some(p), None) => format!("{}: ", p.display()),
        (None, Some(l)) => format!("line {l}: "),
        (None, None) => String::new(),
    }
}

impl CliError {
    pub fn with_path(self, file: &Path) -> Self {
        match self {
            CliError::Config { line, message, .. } => CliError::Config {
                path: Some(file.to_path_buf()),
                line,
                message,
            },
            other => other,
        }
    }

    /// 2 for bad input, 3 for solver or output failures.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => ExitCode::from(2),
            CliError::Io { .. } | CliError::Csv { .. } | CliError::NonFinite { .. } | CliError::Solver(_) => {
                ExitCode::from(3)
            }
        }
    }
}
