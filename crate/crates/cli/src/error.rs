use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] ffn_core::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use ffn_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::Config { .. } | E::Placement { .. } => EXIT_CONFIG,
                E::Io { .. } => EXIT_IO,
                E::MalformedHeader { .. }
                | E::PayloadMismatch { .. }
                | E::UnsupportedDtype(_)
                | E::OutOfBounds { .. }
                | E::DimsMismatch { .. }
                | E::InvalidValue(_)
                | E::ShapeMismatch(_)
                | E::Architecture(_)
                | E::Precondition(_)
                | E::Parse { .. }
                | E::DanglingEdge { .. }
                | E::DuplicateNode { .. }
                | E::Overlap { .. }
                | E::EmptyCorpus
                | E::ZeroEdges => EXIT_VALIDATION,
                _ => EXIT_OTHER,
            },
        }
    }
}
