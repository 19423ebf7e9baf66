use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage that rejected its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Homography,
    Shading,
    Curve,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Homography => "homography estimation",
            Stage::Shading => "shading estimation",
            Stage::Curve => "shading curve fit",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: unsupported image format ({detail})")]
    Format { path: PathBuf, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("profile parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("unsupported profile version {found} (expected {expected})")]
    UnsupportedVersion { found: i64, expected: i64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for I/O failures (unreadable/unwritable files).
    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
