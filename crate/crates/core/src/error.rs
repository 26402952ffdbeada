use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Where in an input a format error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Byte offset into a binary buffer.
    Byte(usize),
    /// 1-based line number in a text input.
    Line(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {b}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

/// Pipeline stage names, used to tag per-frame failures and timings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Io,
    Upscale,
    Fuse,
    Normalize,
    Unproject,
    Voxelize,
}

impl Stage {
    pub const TIMED: [Stage; 5] = [
        Stage::Io,
        Stage::Fuse,
        Stage::Upscale,
        Stage::Unproject,
        Stage::Voxelize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Io => "io",
            Stage::Upscale => "upscale",
            Stage::Fuse => "fuse",
            Stage::Normalize => "normalize",
            Stage::Unproject => "unproject",
            Stage::Voxelize => "voxelize",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid network weights: {0}")]
    Weights(String),

    #[error("format error at {location}: {message}")]
    Format { location: Location, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("frame {index}: {source}")]
    Frame {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("capture contains no frames")]
    EmptyCapture,
}

impl Error {
    pub(crate) fn format_at(location: Location, message: impl Into<String>) -> Self {
        Error::Format {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_frame(self, index: u64) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage and frame wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Frame { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
