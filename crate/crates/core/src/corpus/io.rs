//! On-disk corpus format.
//!
//! A corpus directory holds two files:
//!
//! * `messages.jsonl`: one JSON object per line, one message per object, with
//!   fields `conversation_id`, `message_id`, `sender`, `timestamp` (RFC 3339 /
//!   ISO-8601, UTC), `text`, `clinic`, `patient_group`, `age_group`, `gender`.
//! * `facets.tsv`: one facet per line, `name<TAB>value<TAB>value...`, values in
//!   display order.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Conversation, Corpus, CorpusError, FacetSchema, Message, PatientFeatures, Sender};

pub const MESSAGES_FILE: &str = "messages.jsonl";
pub const FACETS_FILE: &str = "facets.tsv";

/// One line of `messages.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub conversation_id: String,
    pub message_id: String,
    pub sender: Sender,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub clinic: String,
    pub patient_group: String,
    pub age_group: String,
    pub gender: String,
}

/// What ingestion skipped or rewrote.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines_read: usize,
    /// `(line number, reason)` for every rejected line; 1-based.
    pub malformed: Vec<(usize, String)>,
    /// Feature fields replaced by the `unknown` sentinel.
    pub unknown_values: usize,
    /// Messages whose features disagree with the first message of their conversation.
    pub inconsistent_features: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

fn resolve(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(MESSAGES_FILE), path.join(FACETS_FILE))
    } else {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        (path.to_path_buf(), dir.join(FACETS_FILE))
    }
}

fn read_schema(path: &Path) -> Result<FacetSchema, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut schema = FacetSchema::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default().trim();
        if name.is_empty() {
            return Err(CorpusError::Schema { line: i + 1, reason: "missing facet name".into() });
        }
        if schema.values(name).is_some() {
            return Err(CorpusError::Schema { line: i + 1, reason: format!("facet {name} declared twice") });
        }
        schema.insert(name, fields.map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect());
    }
    Ok(schema)
}

fn parse_line(line: &str) -> Result<MessageRecord, String> {
    let mut rec: MessageRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.text.trim().is_empty() {
        return Err("empty message text".into());
    }
    if rec.conversation_id.is_empty() || rec.message_id.is_empty() {
        return Err("empty id".into());
    }
    rec.timestamp = rec.timestamp.trunc_subsecs(0);
    Ok(rec)
}

/// Loads a corpus from a directory (or its `messages.jsonl`) plus the facet sidecar.
///
/// Malformed lines are skipped and listed in the report. Messages are grouped
/// by conversation in first-appearance order and stably sorted by timestamp.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, IngestReport), CorpusError> {
    let (messages_path, schema_path) = resolve(path.as_ref());
    let schema = read_schema(&schema_path)?;
    let file = fs::File::open(&messages_path).map_err(io_err(&messages_path))?;

    let mut report = IngestReport::default();
    let mut groups: IndexMap<String, (PatientFeatures, Vec<Message>)> = IndexMap::new();
    let mut message_ids = HashSet::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&messages_path))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines_read += 1;
        let rec = match parse_line(&line) {
            Ok(rec) => rec,
            Err(reason) => {
                report.malformed.push((i + 1, reason));
                continue;
            }
        };
        if !message_ids.insert(rec.message_id.clone()) {
            report.malformed.push((i + 1, format!("duplicate message id {}", rec.message_id)));
            continue;
        }
        let features = PatientFeatures {
            clinic: rec.clinic,
            patient_group: rec.patient_group,
            age_group: rec.age_group,
            gender: rec.gender,
        };
        let message = Message {
            id: rec.message_id,
            conversation_id: rec.conversation_id.clone(),
            sender: rec.sender,
            timestamp: rec.timestamp,
            text: rec.text,
        };
        let entry = groups.entry(rec.conversation_id).or_insert_with(|| (features.clone(), Vec::new()));
        if entry.0 != features {
            report.inconsistent_features += 1;
        }
        entry.1.push(message);
    }
    if !report.malformed.is_empty() {
        log::warn!("{}: skipped {} malformed lines", messages_path.display(), report.malformed.len());
    }

    let mut schema = schema;
    let mut conversations = Vec::with_capacity(groups.len());
    for (id, (mut features, messages)) in groups {
        report.unknown_values += schema.sanitize(&mut features);
        conversations.push(Conversation::new(id, messages, features)?);
    }
    if conversations.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok((Corpus::new(conversations, schema)?, report))
}

/// Writes `messages.jsonl` and `facets.tsv` into `dir`, creating it if needed.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let schema_path = dir.join(FACETS_FILE);
    let mut schema_text = String::new();
    for (facet, values) in corpus.facet_schema().facets() {
        schema_text.push_str(facet);
        for v in values {
            schema_text.push('\t');
            schema_text.push_str(v);
        }
        schema_text.push('\n');
    }
    fs::write(&schema_path, schema_text).map_err(io_err(&schema_path))?;

    let messages_path = dir.join(MESSAGES_FILE);
    let file = fs::File::create(&messages_path).map_err(io_err(&messages_path))?;
    let mut out = BufWriter::new(file);
    for line in message_lines(corpus) {
        writeln!(out, "{line}").map_err(io_err(&messages_path))?;
    }
    out.flush().map_err(io_err(&messages_path))
}

/// The `messages.jsonl` lines for a corpus, in conversation then message order.
pub fn message_lines(corpus: &Corpus) -> impl Iterator<Item = String> + '_ {
    corpus.conversations().iter().flat_map(|c| {
        c.messages().iter().map(move |m| {
            let f = c.features();
            // Field order is fixed by hand so output is byte-stable.
            format!(
                "{{\"conversation_id\":{},\"message_id\":{},\"sender\":{},\"timestamp\":{},\"text\":{},\"clinic\":{},\"patient_group\":{},\"age_group\":{},\"gender\":{}}}",
                json(&c.id),
                json(&m.id),
                json(&m.sender),
                json(&m.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true)),
                json(&m.text),
                json(&f.clinic),
                json(&f.patient_group),
                json(&f.age_group),
                json(&f.gender),
            )
        })
    })
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("string serialization")
}
