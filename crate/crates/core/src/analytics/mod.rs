//! Cross-filtered aggregation over an enriched corpus.

mod index;
mod selection;
mod trend;

pub use index::*;
pub use selection::*;
pub use trend::*;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("no annotation for conversation {0}")]
    MissingAnnotation(String),
    #[error("conversation {conversation} has unknown topic {topic}")]
    UnknownTopic { conversation: String, topic: String },
    #[error("facet {facet} value {value} is not in the schema")]
    UndeclaredValue { facet: String, value: String },
}
