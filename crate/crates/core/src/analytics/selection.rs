use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use fixedbitset::FixedBitSet;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::CrossFilterIndex;
use crate::phrase::DEFAULT_TAU;

/// Phrase constraint inside a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhraseFilter {
    pub text: String,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// The user's current constraints.
///
/// Values selected within one facet are OR-ed. Facets, topics, the time
/// range and the phrase are AND-ed, and every selected topic must be present.
/// An empty selection matches everything.
///
/// Wire format: `{"facets": {name: [values]}, "topics": [ids],
/// "time_range": [start, end], "phrase": {"text": ..., "tau": ...}}`, all
/// fields optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSelection {
    #[serde(default)]
    pub facets: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub topics: BTreeSet<String>,
    #[serde(default)]
    pub time_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    #[serde(default)]
    pub phrase: Option<PhraseFilter>,
}

impl FilterSelection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_facet(mut self, facet: &str, value: &str) -> Self {
        self.facets.entry(facet.to_string()).or_default().insert(value.to_string());
        self
    }

    pub fn with_topic(mut self, topic: &str) -> Self {
        self.topics.insert(topic.to_string());
        self
    }

    pub fn with_time_range(mut self, start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        self.time_range = Some((start, end));
        self
    }

    pub fn with_phrase(mut self, text: &str, tau: f64) -> Self {
        self.phrase = Some(PhraseFilter { text: text.to_string(), tau });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.facets.values().all(BTreeSet::is_empty) && self.topics.is_empty() && self.time_range.is_none() && self.phrase.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionIssue {
    pub field: String,
    pub message: String,
}

/// Every problem found in a selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionError {
    pub issues: Vec<SelectionIssue>,
}

impl SelectionError {
    pub fn single(field: &str, message: impl Into<String>) -> Self {
        Self { issues: vec![SelectionIssue { field: field.to_string(), message: message.into() }] }
    }
}

impl fmt::Display for SelectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        write!(f, "invalid selection ({})", parts.join("; "))
    }
}

impl std::error::Error for SelectionError {}

/// A validated selection compiled to bitsets over an index's ordinals.
#[derive(Debug, Clone)]
pub struct ResolvedSelection {
    pub(super) facet_masks: IndexMap<String, FixedBitSet>,
    pub(super) topic_mask: Option<FixedBitSet>,
    pub(super) time_mask: Option<FixedBitSet>,
    pub(super) phrase_mask: Option<FixedBitSet>,
}

impl CrossFilterIndex {
    /// Validates `selection` and compiles it.
    ///
    /// `phrase_hits` carries the conversation ids matched by the selection's
    /// phrase; it is required whenever the selection has one.
    pub fn resolve(
        &self,
        selection: &FilterSelection,
        phrase_hits: Option<&BTreeSet<String>>,
    ) -> Result<ResolvedSelection, SelectionError> {
        let mut issues = Vec::new();
        let mut issue = |field: String, message: String| issues.push(SelectionIssue { field, message });

        let mut facet_masks = IndexMap::new();
        for (facet, values) in &selection.facets {
            let Some(value_sets) = self.facet_bitsets(facet) else {
                issue(format!("facets.{facet}"), "unknown facet".into());
                continue;
            };
            if values.is_empty() {
                continue;
            }
            let mut mask = self.empty_set();
            for v in values {
                match value_sets.get(v) {
                    Some(bits) => mask.union_with(bits),
                    None => issue(format!("facets.{facet}"), format!("unknown value {v:?}")),
                }
            }
            facet_masks.insert(facet.clone(), mask);
        }

        let mut topic_mask: Option<FixedBitSet> = None;
        for t in &selection.topics {
            match self.topic_bitset(t) {
                Some(bits) => match topic_mask.as_mut() {
                    Some(m) => m.intersect_with(bits),
                    None => topic_mask = Some(bits.clone()),
                },
                None => issue("topics".into(), format!("unknown topic {t:?}")),
            }
        }

        let time_mask = match selection.time_range {
            Some((start, end)) if start > end => {
                issue("time_range".into(), "start is after end".into());
                None
            }
            Some((start, end)) => Some(self.time_bitset(start, end)),
            None => None,
        };

        let phrase_mask = match (&selection.phrase, phrase_hits) {
            (None, _) => None,
            (Some(p), _) if !(p.tau > 0.0 && p.tau <= 1.0) => {
                issue("phrase.tau".into(), format!("{} outside (0, 1]", p.tau));
                None
            }
            (Some(p), _) if p.text.trim().is_empty() => {
                issue("phrase.text".into(), "empty phrase".into());
                None
            }
            (Some(_), None) => {
                issue("phrase".into(), "phrase matching is unavailable".into());
                None
            }
            (Some(_), Some(hits)) => {
                let mut mask = self.empty_set();
                hits.iter().filter_map(|id| self.ordinal(id)).for_each(|i| mask.insert(i));
                Some(mask)
            }
        };

        if issues.is_empty() {
            Ok(ResolvedSelection { facet_masks, topic_mask, time_mask, phrase_mask })
        } else {
            Err(SelectionError { issues })
        }
    }
}

impl ResolvedSelection {
    /// Masks of every constraint, skipping one facet's own constraint if given.
    pub(super) fn masks_except<'a>(&'a self, skip_facet: Option<&'a str>, skip_topics: bool) -> impl Iterator<Item = &'a FixedBitSet> + 'a {
        self.facet_masks
            .iter()
            .filter(move |(f, _)| Some(f.as_str()) != skip_facet)
            .map(|(_, m)| m)
            .chain(self.topic_mask.iter().filter(move |_| !skip_topics))
            .chain(self.time_mask.iter())
            .chain(self.phrase_mask.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let json = r#"{"facets":{"clinic":["Clinic B"]},"topics":["physical"],"time_range":["2020-01-01T00:00:00Z","2020-02-01T00:00:00Z"],"phrase":{"text":"chest pain"}}"#;
        let s: FilterSelection = serde_json::from_str(json).unwrap();
        assert!(s.facets["clinic"].contains("Clinic B"));
        assert_eq!(s.phrase.as_ref().unwrap().tau, DEFAULT_TAU);
        assert!(s.time_range.is_some());
        let back: FilterSelection = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<FilterSelection>("{}").unwrap().is_empty());
        assert!(serde_json::from_str::<FilterSelection>(r#"{"bogus":1}"#).is_err());
    }
}
