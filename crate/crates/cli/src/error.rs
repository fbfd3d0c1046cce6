use std::path::{Path, PathBuf};

use serde::Serialize;

/// Everything the command-line surface can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{message}")]
    Threshold { message: String },
    #[error(transparent)]
    Core(#[from] aerotraffic_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Image { .. } => "image",
            CliError::Format { .. } => "format",
            CliError::Threshold { .. } => "threshold",
            CliError::Core(e) => e.kind(),
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<String>,
        }
        let (field, path) = match self {
            CliError::Config { field, .. } => (Some(field.as_str()), None),
            CliError::Io { path, .. } | CliError::Image { path, .. } | CliError::Format { path, .. } => {
                (None, Some(path.display().to_string()))
            }
            _ => (None, None),
        };
        serde_json::to_string(&Line {
            error: self.kind(),
            message: self.to_string(),
            field,
            path,
        })
        .expect("plain strings serialize")
    }
}
