use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Feature-map axis named in bounds errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
    Channel,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Row => "row",
            Axis::Col => "col",
            Axis::Channel => "channel",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{axis} index {index} out of bounds (len {len})")]
    OutOfBounds { axis: Axis, index: usize, len: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("degenerate projection (homogeneous w = 0)")]
    DegenerateProjection,

    #[error("malformed FMAP data at byte offset {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("scene generation failed at {point}: {reason}")]
    Generation { point: String, reason: String },

    #[error("render error: {0}")]
    Render(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
