use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown dataset format `{0}` (expected ml100k, ml1m or amazon-csv)")]
    UnknownFormat(String),

    #[error("no parseable lines in {path} ({malformed} malformed)")]
    NoParseableLines { path: PathBuf, malformed: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("split too small: {0}")]
    DegenerateSplit(String),

    #[error("{what} index {index} out of range (size {size})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: non-finite loss ({loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("bad magic: not an autoseqrec container")]
    BadMagic,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("vocabulary drift: checkpoint digest {found} does not match dataset digest {expected}")]
    VocabularyDrift { expected: String, found: String },

    #[error("truncated section `{section}`: need {needed} bytes, have {available}")]
    Truncated {
        section: String,
        needed: usize,
        available: usize,
    },

    #[error("malformed container: {0}")]
    Format(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
