//! Topic verdicts from interactive labeling: an append-only log with
//! latest-wins materialization, plus CSV export and parse-back.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use convoscope::topics::{AnnotationRecord, AnnotationSet};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const EXPORT_HEADER: [&str; 6] = ["conversation_id", "topic_id", "model_prediction", "verdict", "annotator_id", "recorded_at"];
pub const EXPORT_COMMENT: &str =
    "# training label = model_prediction when verdict is agree, the opposite when disagree";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Present,
    Absent,
}

impl Presence {
    pub fn from_bool(present: bool) -> Self {
        if present { Self::Present } else { Self::Absent }
    }

    pub fn is_present(self) -> bool {
        self == Self::Present
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Present => "present",
            Self::Absent => "absent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Agree,
    Disagree,
}

impl Verdict {
    fn as_str(self) -> &'static str {
        match self {
            Self::Agree => "agree",
            Self::Disagree => "disagree",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicVerdict {
    pub conversation_id: String,
    pub topic_id: String,
    pub model_prediction: Presence,
    pub verdict: Verdict,
    pub annotator_id: String,
    pub recorded_at: DateTime<Utc>,
}

impl TopicVerdict {
    /// The label this verdict implies for retraining.
    pub fn training_label(&self) -> bool {
        match self.verdict {
            Verdict::Agree => self.model_prediction.is_present(),
            Verdict::Disagree => !self.model_prediction.is_present(),
        }
    }

    fn key(&self) -> (String, String, String) {
        (self.conversation_id.clone(), self.topic_id.clone(), self.annotator_id.clone())
    }
}

type Key = (String, String, String);

/// Verdict log on disk. Later appends supersede earlier ones with the same
/// (conversation, topic, annotator).
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    latest: BTreeMap<Key, TopicVerdict>,
}

impl LabelStore {
    /// Opens or creates the log and replays it. A torn final line from an
    /// interrupted write is skipped with a warning; other bad lines are errors.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref().to_path_buf();
        let mut latest = BTreeMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
            let last = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<TopicVerdict>(&line) {
                    Ok(v) => {
                        latest.insert(v.key(), v);
                    }
                    Err(e) if i + 1 == last => log::warn!("{}: ignoring torn last line: {e}", path.display()),
                    Err(e) => return Err(ServiceError::Storage(format!("{} line {}: {e}", path.display(), i + 1))),
                }
            }
        }
        Ok(Self { path, latest })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs the verdict before making it visible.
    pub fn record(&mut self, verdict: TopicVerdict) -> Result<(), ServiceError> {
        let storage = |e: std::io::Error| ServiceError::Storage(format!("{}: {e}", self.path.display()));
        let mut line = serde_json::to_string(&verdict).expect("verdict serializes");
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(storage)?;
        file.write_all(line.as_bytes()).map_err(storage)?;
        file.sync_data().map_err(storage)?;
        self.latest.insert(verdict.key(), verdict);
        Ok(())
    }

    /// Latest verdict per key, sorted by (conversation, topic, annotator).
    pub fn verdicts(&self) -> Vec<TopicVerdict> {
        self.latest.values().cloned().collect()
    }
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Export CSV: a comment line, the header, then one row per verdict sorted by
/// (conversation_id, topic_id, annotator_id).
pub fn export_csv(verdicts: &[TopicVerdict]) -> String {
    let mut sorted: Vec<&TopicVerdict> = verdicts.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.conversation_id, &a.topic_id, &a.annotator_id).cmp(&(&b.conversation_id, &b.topic_id, &b.annotator_id))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EXPORT_HEADER).expect("in-memory write");
    for v in sorted {
        w.write_record([
            v.conversation_id.as_str(),
            &v.topic_id,
            v.model_prediction.as_str(),
            v.verdict.as_str(),
            &v.annotator_id,
            &timestamp(&v.recorded_at),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    format!("{EXPORT_COMMENT}\n{body}")
}

/// Reads an export back into verdicts.
pub fn parse_export(text: &str) -> Result<Vec<TopicVerdict>, ServiceError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ServiceError::Invalid(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != EXPORT_HEADER {
        return Err(ServiceError::Invalid(format!("unexpected export header {headers:?}")));
    }
    rdr.deserialize::<TopicVerdict>()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| ServiceError::Invalid(format!("export row {}: {e}", i + 1))))
        .collect()
}

pub fn is_export(text: &str) -> bool {
    text.lines().find(|l| !l.starts_with('#')).is_some_and(|l| l.trim_end() == EXPORT_HEADER.join(","))
}

/// Verdicts as annotation records carrying the derived training label.
pub fn verdicts_to_annotations(verdicts: &[TopicVerdict]) -> AnnotationSet {
    AnnotationSet::new(
        verdicts
            .iter()
            .map(|v| AnnotationRecord {
                conversation_id: v.conversation_id.clone(),
                annotator_id: v.annotator_id.clone(),
                topic_id: v.topic_id.clone(),
                label: v.training_label(),
            })
            .collect(),
    )
}

/// Reads either an annotation CSV or a verdict export.
pub fn read_annotations(text: &str) -> Result<AnnotationSet, ServiceError> {
    if is_export(text) {
        Ok(verdicts_to_annotations(&parse_export(text)?))
    } else {
        Ok(AnnotationSet::read_csv(text.as_bytes())?)
    }
}
