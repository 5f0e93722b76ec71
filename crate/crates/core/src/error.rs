use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the depthloss toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Two buffers that must share a shape do not.
    #[error("shape mismatch: expected {expected_h}x{expected_w}, found {found_h}x{found_w}")]
    Shape {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value is invalid or unresolvable.
    #[error("configuration error: {0}")]
    Config(String),
    /// A file does not follow the expected encoding.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    /// A value cannot be represented in the target encoding.
    #[error("range error: {0}")]
    Range(String),
    /// A manifest failed validation; every offending field is listed.
    #[error("invalid manifest {path}:\n  {}", .issues.join("\n  "))]
    Manifest { path: PathBuf, issues: Vec<String> },
    /// A synthetic scene description violates its invariants.
    #[error("scene spec error: {0}")]
    Spec(String),
    /// Training produced a non-finite loss, gradient or weight. `stage`
    /// names the offending sample or the kernel update.
    #[error("non-finite value at epoch {epoch} in {stage}")]
    NonFinite { epoch: usize, stage: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape {
            expected_h: expected.0,
            expected_w: expected.1,
            found_h: found.0,
            found_w: found.1,
        }
    }
}
