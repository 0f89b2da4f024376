//! Conversation data model, length filtering and corpus statistics.

mod io;
pub mod synth;

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, write_corpus, IngestReport, MessageRecord, FACETS_FILE, MESSAGES_FILE};

/// Sentinel for feature values that the facet schema does not declare.
pub const UNKNOWN: &str = "unknown";

/// Facet names, in display order.
pub const FACET_NAMES: [&str; 4] = ["clinic", "patient_group", "age_group", "gender"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus contains no valid conversations")]
    Empty,
    #[error("duplicate conversation id {0}")]
    DuplicateConversation(String),
    #[error("conversation {0} has no messages")]
    NoMessages(String),
    #[error("invalid facet schema line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    Patient,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub conversation_id: String,
    pub sender: Sender,
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatientFeatures {
    pub clinic: String,
    pub patient_group: String,
    pub age_group: String,
    pub gender: String,
}

impl PatientFeatures {
    pub fn get(&self, facet: &str) -> Option<&str> {
        match facet {
            "clinic" => Some(&self.clinic),
            "patient_group" => Some(&self.patient_group),
            "age_group" => Some(&self.age_group),
            "gender" => Some(&self.gender),
            _ => None,
        }
    }

    fn get_mut(&mut self, facet: &str) -> Option<&mut String> {
        match facet {
            "clinic" => Some(&mut self.clinic),
            "patient_group" => Some(&mut self.patient_group),
            "age_group" => Some(&mut self.age_group),
            "gender" => Some(&mut self.gender),
            _ => None,
        }
    }

    /// `(facet, value)` pairs in [`FACET_NAMES`] order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &str)> {
        FACET_NAMES.into_iter().map(move |f| (f, self.get(f).unwrap_or(UNKNOWN)))
    }
}

/// Ordered map of facet name to its ordered legal values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetSchema(IndexMap<String, Vec<String>>);

impl FacetSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, facet: impl Into<String>, values: Vec<String>) {
        self.0.insert(facet.into(), values);
    }

    pub fn values(&self, facet: &str) -> Option<&[String]> {
        self.0.get(facet).map(Vec::as_slice)
    }

    pub fn contains(&self, facet: &str, value: &str) -> bool {
        self.values(facet).is_some_and(|vs| vs.iter().any(|v| v == value))
    }

    pub fn facets(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Ensures every known facet is present and declares the sentinel.
    fn ensure_unknown(&mut self, facet: &str) {
        let values = self.0.entry(facet.to_string()).or_default();
        if !values.iter().any(|v| v == UNKNOWN) {
            values.push(UNKNOWN.to_string());
        }
    }

    /// Replaces undeclared values in `features` with [`UNKNOWN`]. Returns the
    /// number of replaced fields.
    pub fn sanitize(&mut self, features: &mut PatientFeatures) -> usize {
        let mut replaced = 0;
        for facet in FACET_NAMES {
            let value = features.get_mut(facet).expect("known facet");
            if value != UNKNOWN && !self.contains(facet, value) {
                *value = UNKNOWN.to_string();
                replaced += 1;
            }
            if value == UNKNOWN {
                self.ensure_unknown(facet);
            }
        }
        replaced
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    id: String,
    messages: Vec<Message>,
    features: PatientFeatures,
    start_time: DateTime<Utc>,
}

impl Conversation {
    /// Builds a conversation, stably sorting messages by timestamp.
    pub fn new(
        id: impl Into<String>,
        mut messages: Vec<Message>,
        features: PatientFeatures,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        messages.sort_by_key(|m| m.timestamp);
        let start_time = messages
            .first()
            .map(|m| m.timestamp)
            .ok_or_else(|| CorpusError::NoMessages(id.clone()))?;
        Ok(Self { id, messages, features, start_time })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn features(&self) -> &PatientFeatures {
        &self.features
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// All message texts joined by newlines.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    conversations: Vec<Conversation>,
    facet_schema: FacetSchema,
}

impl Corpus {
    /// Validates id uniqueness and maps undeclared feature values to [`UNKNOWN`].
    pub fn new(
        mut conversations: Vec<Conversation>,
        mut facet_schema: FacetSchema,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for c in &mut conversations {
            if !seen.insert(c.id.clone()) {
                return Err(CorpusError::DuplicateConversation(c.id.clone()));
            }
            facet_schema.sanitize(&mut c.features);
        }
        Ok(Self { conversations, facet_schema })
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.conversations
    }

    pub fn facet_schema(&self) -> &FacetSchema {
        &self.facet_schema
    }

    pub fn get(&self, id: &str) -> Option<&Conversation> {
        self.conversations.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.conversations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }
}

/// Keeps conversations with at least `min_messages` messages, preserving order.
///
/// Every message counts, whichever side sent it.
pub fn filter_short(corpus: &Corpus, min_messages: usize) -> Corpus {
    Corpus {
        conversations: corpus
            .conversations
            .iter()
            .filter(|c| c.len() >= min_messages)
            .cloned()
            .collect(),
        facet_schema: corpus.facet_schema.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub conversation_count: usize,
    pub message_count: usize,
    pub mean_messages: f64,
    pub time_span: (DateTime<Utc>, DateTime<Utc>),
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    let first = corpus.conversations.first().ok_or(CorpusError::Empty)?;
    let mut span = (first.start_time, first.start_time);
    let mut message_count = 0;
    for c in &corpus.conversations {
        message_count += c.len();
        span.0 = span.0.min(c.start_time);
        span.1 = span.1.max(c.start_time);
    }
    Ok(CorpusStats {
        conversation_count: corpus.len(),
        message_count,
        mean_messages: message_count as f64 / corpus.len() as f64,
        time_span: span,
    })
}
