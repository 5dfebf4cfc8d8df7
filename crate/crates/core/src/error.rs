use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload size mismatch: header declares {expected} elements, payload holds {actual}")]
    PayloadMismatch { expected: usize, actual: usize },

    #[error("unsupported element type `{0}`")]
    UnsupportedDtype(String),

    #[error("region corner {corner:?} size {size:?} exceeds bounds {dims:?}")]
    OutOfBounds {
        corner: [i64; 3],
        size: [usize; 3],
        dims: [usize; 3],
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimsMismatch {
        expected: [usize; 3],
        actual: [usize; 3],
    },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("channel mismatch: layer expects {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("numeric guard: {0}")]
    NumericGuard(String),

    #[error("non-finite value produced in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("architecture error: {0}")]
    Architecture(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("skeleton {skeleton}: edge ({a}, {b}) references a missing node")]
    DanglingEdge { skeleton: u32, a: u32, b: u32 },

    #[error("skeleton {skeleton}: duplicate node id {node}")]
    DuplicateNode { skeleton: u32, node: u32 },

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("object placement failed after {attempts} attempts; configuration too dense")]
    Placement { attempts: usize },

    #[error("skeletons {a} and {b} overlap at voxel {voxel:?}")]
    Overlap { a: u32, b: u32, voxel: [usize; 3] },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("edge set is empty")]
    ZeroEdges,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
