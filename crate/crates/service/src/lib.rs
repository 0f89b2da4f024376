//! HTTP service and operator commands over an enriched conversation corpus.

pub mod api;
pub mod commands;
pub mod labels;
pub mod snapshot;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use api::{router, AppState};
pub use snapshot::{Resources, Snapshot};

pub const DATA_DIR_ENV: &str = "CONVOSCOPE_DATA_DIR";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Corpus(#[from] convoscope::corpus::CorpusError),
    #[error(transparent)]
    Sentiment(#[from] convoscope::sentiment::SentimentError),
    #[error(transparent)]
    Topic(#[from] convoscope::topics::TopicError),
    #[error(transparent)]
    Lda(#[from] convoscope::lda::LdaError),
    #[error(transparent)]
    Phrase(#[from] convoscope::phrase::PhraseError),
    #[error(transparent)]
    Index(#[from] convoscope::analytics::IndexError),
    #[error("{0}")]
    Invalid(String),
    #[error("label storage failed: {0}")]
    Storage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io { path: path.display().to_string(), source }
}

/// Default file locations under a data root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    pub root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$CONVOSCOPE_DATA_DIR`, or `./convoscope-data`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("convoscope-data")))
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    pub fn lexicon(&self) -> PathBuf {
        self.root.join("lexicon.tsv")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.txt")
    }
    pub fn hierarchy(&self) -> PathBuf {
        self.root.join("hierarchy.tsv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn lda(&self) -> PathBuf {
        self.root.join("lda.txt")
    }
    pub fn labels(&self) -> PathBuf {
        self.root.join("labels.jsonl")
    }
    pub fn annotations(&self) -> PathBuf {
        self.root.join("annotations.csv")
    }
    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.json")
    }
}
