use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no word occurs at least {min_count} times")]
    NoSurvivingWords { min_count: u64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("cannot corrupt an empty document")]
    EmptyDocument,

    #[error("cannot embed empty document")]
    EmptyEmbedding,

    #[error("degenerate instance: empty local context and no global context")]
    DegenerateInstance,

    #[error("need at least 2 words in the vocabulary to draw negatives, got {0}")]
    VocabularyTooSmall(usize),

    #[error("non-finite value ({what}) for target {target} with context {context:?}")]
    NonFinite {
        what: &'static str,
        target: u32,
        context: Vec<u32>,
    },

    #[error("training diverged in epoch {epoch} at document {document}: {source}")]
    Diverged {
        epoch: usize,
        document: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),

    #[error("classifier needs at least 2 classes, got {0}")]
    SingleClass(usize),

    #[error("{0}")]
    Mismatch(String),

    #[error("need at least 3 distinct counts for a rank correlation, got {0}")]
    TooFewDistinctCounts(usize),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: impl ToString, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            reason,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
