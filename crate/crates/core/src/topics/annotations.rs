use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{TopicError, TopicHierarchy};

pub const ANNOTATION_HEADER: [&str; 4] = ["conversation_id", "annotator_id", "topic_id", "label"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub conversation_id: String,
    pub annotator_id: String,
    pub topic_id: String,
    pub label: bool,
}

/// Human topic labels, one record per (conversation, annotator, topic).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub records: Vec<AnnotationRecord>,
}

#[derive(Deserialize)]
struct Row {
    conversation_id: String,
    annotator_id: String,
    topic_id: String,
    label: u8,
}

impl AnnotationSet {
    pub fn new(records: Vec<AnnotationRecord>) -> Self {
        Self { records }
    }

    /// Reads `conversation_id,annotator_id,topic_id,label` CSV; label is 0 or 1.
    pub fn read_csv(reader: impl Read) -> Result<Self, TopicError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(|e| TopicError::Annotation(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ANNOTATION_HEADER {
            return Err(TopicError::Annotation(format!("unexpected header {headers:?}")));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| TopicError::Annotation(format!("row {}: {e}", i + 1)))?;
            let label = match row.label {
                0 => false,
                1 => true,
                other => return Err(TopicError::Annotation(format!("row {}: label {other} not in {{0,1}}", i + 1))),
            };
            records.push(AnnotationRecord {
                conversation_id: row.conversation_id,
                annotator_id: row.annotator_id,
                topic_id: row.topic_id,
                label,
            });
        }
        Ok(Self { records })
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), TopicError> {
        let err = |e: csv::Error| TopicError::Annotation(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ANNOTATION_HEADER).map_err(err)?;
        for r in &self.records {
            w.write_record([r.conversation_id.as_str(), &r.annotator_id, &r.topic_id, if r.label { "1" } else { "0" }])
                .map_err(err)?;
        }
        w.flush().map_err(|e| TopicError::Annotation(e.to_string()))
    }

    /// Fails on the first record naming a topic outside the hierarchy.
    pub fn validate(&self, hierarchy: &TopicHierarchy) -> Result<(), TopicError> {
        match self.records.iter().find(|r| !hierarchy.contains(&r.topic_id)) {
            Some(r) => Err(TopicError::Annotation(format!("unknown topic {} for {}", r.topic_id, r.conversation_id))),
            None => Ok(()),
        }
    }

    /// annotator → conversation → label for one topic. Repeated records
    /// are OR-ed together.
    pub fn labels_for_topic(&self, topic_id: &str) -> BTreeMap<String, BTreeMap<String, bool>> {
        let mut out: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.topic_id == topic_id) {
            *out.entry(r.annotator_id.clone()).or_default().entry(r.conversation_id.clone()).or_default() |= r.label;
        }
        out
    }

    /// Positive topic set per (conversation, annotator).
    pub fn topic_sets(&self) -> BTreeMap<(String, String), BTreeSet<String>> {
        let mut out: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for r in &self.records {
            let set = out.entry((r.conversation_id.clone(), r.annotator_id.clone())).or_default();
            if r.label {
                set.insert(r.topic_id.clone());
            }
        }
        out
    }

    /// Majority vote per conversation: a topic is positive when at least half
    /// of the annotators who labeled that conversation marked it.
    pub fn consensus(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut annotators: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut votes: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
        for r in &self.records {
            annotators.entry(&r.conversation_id).or_default().insert(&r.annotator_id);
            if r.label {
                votes.entry((&r.conversation_id, &r.topic_id)).or_default().insert(&r.annotator_id);
            }
        }
        let mut out: BTreeMap<String, BTreeSet<String>> =
            annotators.keys().map(|c| (c.to_string(), BTreeSet::new())).collect();
        for ((conv, topic), who) in votes {
            if 2 * who.len() >= annotators[conv].len() {
                out.get_mut(conv).expect("seen conversation").insert(topic.to_string());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "conversation_id,annotator_id,topic_id,label\nc1,a,medication,1\nc1,b,medication,0\nc1,c,medication,1\nc2,a,medication,0\n";

    #[test]
    fn csv_round_trip() {
        let set = AnnotationSet::read_csv(CSV.as_bytes()).unwrap();
        assert_eq!(set.records.len(), 4);
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), CSV);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(AnnotationSet::read_csv("a,b,c,d\n".as_bytes()).is_err());
        assert!(AnnotationSet::read_csv("conversation_id,annotator_id,topic_id,label\nc,a,t,2\n".as_bytes()).is_err());
    }

    #[test]
    fn consensus_is_majority() {
        let set = AnnotationSet::read_csv(CSV.as_bytes()).unwrap();
        let c = set.consensus();
        assert!(c["c1"].contains("medication"));
        assert!(c["c2"].is_empty());
    }

    #[test]
    fn validates_topics() {
        let set = AnnotationSet::read_csv(CSV.as_bytes()).unwrap();
        assert!(set.validate(&TopicHierarchy::builtin()).is_ok());
        assert!(set.validate(&TopicHierarchy::parse("x\tX\t-").unwrap()).is_err());
    }
}
