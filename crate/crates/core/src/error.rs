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

    #[error("empty sample")]
    EmptySample,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("classes not separable: min good score {min_good:.6} <= max bad score {max_bad:.6}")]
    NotSeparable { min_good: f64, max_bad: f64 },

    #[error("no representation for {0:?}")]
    NoRepresentation(String),

    #[error("coherence undefined for topic {topic}: none of its top terms occur in any window")]
    CoherenceUndefined { topic: usize },

    #[error("no placeholder term is present in the topic vocabulary")]
    NoPlaceholders,

    #[error("labels contain a single class")]
    SingleClass,

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("requires artifact {artifact} (run {producer})")]
    MissingArtifact { artifact: String, producer: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
