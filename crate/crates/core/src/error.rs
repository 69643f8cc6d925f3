//! Error type shared across the pipeline.

use std::path::PathBuf;

/// Errors produced by dataset I/O, validation, and pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not found: {}", path.display())]
    NotFound { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {}{}: {message}", path.display(), fmt_loc(*line))]
    Parse {
        path: PathBuf,
        /// 1-based line number for text formats, `None` for binary formats.
        line: Option<u64>,
        message: String,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("{context}: need at least {needed} points, got {got}")]
    InsufficientPoints {
        context: String,
        needed: usize,
        got: usize,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("stage {stage}, frame {frame}: {source}")]
    Stage {
        stage: &'static str,
        frame: u32,
        #[source]
        source: Box<Error>,
    },
}

fn fmt_loc(line: Option<u64>) -> String {
    match line {
        Some(n) => format!(" line {n}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the pipeline stage and frame it occurred in.
    pub fn in_stage(self, stage: &'static str, frame: u32) -> Self {
        Error::Stage {
            stage,
            frame,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 for data problems, 3 for internal bugs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_mentions_line() {
        let e = Error::parse("poses.csv", Some(7), "expected 13 fields");
        let msg = e.to_string();
        assert!(msg.contains("poses.csv"), "{msg}");
        assert!(msg.contains("line 7"), "{msg}");
    }

    #[test]
    fn exit_codes_distinguish_data_from_internal() {
        assert_eq!(Error::validation("fx", "must be positive").exit_code(), 2);
        assert_eq!(Error::Internal("impossible state".into()).exit_code(), 3);
    }
}
