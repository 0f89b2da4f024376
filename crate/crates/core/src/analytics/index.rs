use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use fixedbitset::FixedBitSet;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{IndexError, ResolvedSelection};
use crate::corpus::Corpus;
use crate::sentiment::SentimentBin;
use crate::topics::TopicHierarchy;

/// Derived annotations for one conversation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversationAnnotation {
    /// Topic ids present in the conversation. Parents of listed leaves are
    /// added at index time.
    pub topics: BTreeSet<String>,
    /// Sentiment bin of every message, in message order.
    pub message_bins: Vec<SentimentBin>,
}

/// Bitset index over facet values, topics and time.
///
/// Conversations are numbered by `(start_time, id)`, so time ranges map to
/// contiguous ordinal ranges.
#[derive(Debug, Clone)]
pub struct CrossFilterIndex {
    ids: Vec<String>,
    ordinals: HashMap<String, usize>,
    start_times: Vec<DateTime<Utc>>,
    facets: IndexMap<String, IndexMap<String, FixedBitSet>>,
    topics: IndexMap<String, FixedBitSet>,
    hierarchy: TopicHierarchy,
    message_bins: Vec<Vec<SentimentBin>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueCount {
    pub value: String,
    /// Conversations with this value under every other active constraint.
    pub total: usize,
    /// Conversations with this value under the full selection.
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetProportions {
    pub facets: IndexMap<String, Vec<ValueCount>>,
    pub selected: usize,
    pub universe: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCount {
    pub topic_id: String,
    pub label: String,
    pub parent_id: Option<String>,
    pub total: usize,
    pub matched: usize,
    /// Message counts per sentiment bin, -2 to +2, over matched conversations.
    pub sentiment: [usize; 5],
}

/// Builds the index. Every conversation needs an annotation and every
/// annotated topic must exist in `hierarchy`.
pub fn build_index(
    corpus: &Corpus,
    hierarchy: &TopicHierarchy,
    annotations: &HashMap<String, ConversationAnnotation>,
) -> Result<CrossFilterIndex, IndexError> {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let convs = corpus.conversations();
    order.sort_by(|&a, &b| convs[a].start_time().cmp(&convs[b].start_time()).then_with(|| convs[a].id().cmp(convs[b].id())));
    let n = order.len();
    let empty = FixedBitSet::with_capacity(n);

    let mut facets: IndexMap<String, IndexMap<String, FixedBitSet>> = corpus
        .facet_schema()
        .facets()
        .map(|(f, values)| (f.to_string(), values.iter().map(|v| (v.clone(), empty.clone())).collect()))
        .collect();
    let mut topics: IndexMap<String, FixedBitSet> =
        hierarchy.display_order().into_iter().map(|node| (node.id.clone(), empty.clone())).collect();

    let mut ids = Vec::with_capacity(n);
    let mut ordinals = HashMap::with_capacity(n);
    let mut start_times = Vec::with_capacity(n);
    let mut message_bins = Vec::with_capacity(n);
    for (ordinal, &ci) in order.iter().enumerate() {
        let conv = &convs[ci];
        let ann = annotations.get(conv.id()).ok_or_else(|| IndexError::MissingAnnotation(conv.id().to_string()))?;
        for (facet, value) in conv.features().iter() {
            let bits = facets
                .get_mut(facet)
                .and_then(|vs| vs.get_mut(value))
                .ok_or_else(|| IndexError::UndeclaredValue { facet: facet.to_string(), value: value.to_string() })?;
            bits.insert(ordinal);
        }
        for t in &ann.topics {
            let parent = hierarchy.parent_of(t).map(str::to_string);
            for id in std::iter::once(t).chain(parent.as_ref()) {
                topics
                    .get_mut(id)
                    .ok_or_else(|| IndexError::UnknownTopic { conversation: conv.id().to_string(), topic: id.clone() })?
                    .insert(ordinal);
            }
        }
        ids.push(conv.id().to_string());
        ordinals.insert(conv.id().to_string(), ordinal);
        start_times.push(conv.start_time());
        message_bins.push(ann.message_bins.clone());
    }
    Ok(CrossFilterIndex { ids, ordinals, start_times, facets, topics, hierarchy: hierarchy.clone(), message_bins })
}

impl CrossFilterIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn hierarchy(&self) -> &TopicHierarchy {
        &self.hierarchy
    }

    /// Conversation ids in ordinal order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.ordinals.get(id).copied()
    }

    pub fn start_time(&self, ordinal: usize) -> DateTime<Utc> {
        self.start_times[ordinal]
    }

    pub fn message_bins(&self, ordinal: usize) -> &[SentimentBin] {
        &self.message_bins[ordinal]
    }

    pub(crate) fn empty_set(&self) -> FixedBitSet {
        FixedBitSet::with_capacity(self.len())
    }

    pub fn universe(&self) -> FixedBitSet {
        let mut all = self.empty_set();
        all.insert_range(..);
        all
    }

    pub fn facet_bitsets(&self, facet: &str) -> Option<&IndexMap<String, FixedBitSet>> {
        self.facets.get(facet)
    }

    pub fn facet_names(&self) -> impl Iterator<Item = &str> {
        self.facets.keys().map(String::as_str)
    }

    pub fn topic_bitset(&self, topic: &str) -> Option<&FixedBitSet> {
        self.topics.get(topic)
    }

    /// Topic ids in display order (each parent followed by its children).
    pub fn topic_rows(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn has_topic(&self, ordinal: usize, topic: &str) -> bool {
        self.topics.get(topic).is_some_and(|b| b.contains(ordinal))
    }

    /// Conversations whose start time lies in the closed interval.
    pub fn time_bitset(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> FixedBitSet {
        let lo = self.start_times.partition_point(|t| *t < start);
        let hi = self.start_times.partition_point(|t| *t <= end);
        let mut bits = self.empty_set();
        if lo < hi {
            bits.insert_range(lo..hi);
        }
        bits
    }

    fn intersect_all<'a>(&self, masks: impl Iterator<Item = &'a FixedBitSet>) -> FixedBitSet {
        let mut out = self.universe();
        for m in masks {
            out.intersect_with(m);
        }
        out
    }

    /// Ordinals matching the whole selection.
    pub fn apply(&self, selection: &ResolvedSelection) -> FixedBitSet {
        self.intersect_all(selection.masks_except(None, false))
    }

    /// Matching conversation ids in ordinal order.
    pub fn apply_ids(&self, selection: &ResolvedSelection) -> Vec<&str> {
        self.apply(selection).ones().map(|i| self.ids[i].as_str()).collect()
    }

    /// Per facet value: `total` counts the value among conversations passing
    /// every constraint except the facet's own; `matched` under the full selection.
    pub fn facet_proportions(&self, selection: &ResolvedSelection) -> FacetProportions {
        let full = self.apply(selection);
        let facets = self
            .facets
            .iter()
            .map(|(facet, values)| {
                let base = self.intersect_all(selection.masks_except(Some(facet), false));
                let counts = values
                    .iter()
                    .map(|(value, bits)| ValueCount {
                        value: value.clone(),
                        total: base.intersection_count(bits),
                        matched: full.intersection_count(bits),
                    })
                    .collect();
                (facet.clone(), counts)
            })
            .collect();
        FacetProportions { facets, selected: full.count_ones(..), universe: self.len() }
    }

    /// Per topic, in display order. `total` ignores the topic constraints.
    pub fn topic_counts(&self, selection: &ResolvedSelection) -> Vec<TopicCount> {
        let full = self.apply(selection);
        let base = self.intersect_all(selection.masks_except(None, true));
        self.topics
            .iter()
            .map(|(id, bits)| {
                let node = self.hierarchy.get(id).expect("indexed topic exists");
                let mut sentiment = [0usize; 5];
                for i in full.intersection(bits) {
                    for b in &self.message_bins[i] {
                        sentiment[(b.level() + 2) as usize] += 1;
                    }
                }
                TopicCount {
                    topic_id: id.clone(),
                    label: node.label.clone(),
                    parent_id: node.parent_id.clone(),
                    total: base.intersection_count(bits),
                    matched: full.intersection_count(bits),
                    sentiment,
                }
            })
            .collect()
    }
}
