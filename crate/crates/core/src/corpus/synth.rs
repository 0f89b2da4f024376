//! Deterministic synthetic corpora with a ground-truth ledger.
//!
//! Topics are planted by inserting keywords into messages, sentiment by
//! appending words from the default lexicon. The ledger records what was
//! planted so tests can check every downstream count against it.

use std::collections::{BTreeSet, HashSet};
use std::ops::RangeInclusive;

use chrono::{DateTime, Duration, TimeZone, Utc};
use indexmap::IndexMap;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Conversation, Corpus, CorpusError, FacetSchema, Message, PatientFeatures, Sender, FACET_NAMES};

const FILLER: &[&str] = &[
    "today", "morning", "evening", "week", "called", "yesterday", "checking", "update", "message",
    "regarding", "question", "reply", "time", "tomorrow", "office", "doctor", "nurse", "team",
    "information", "details", "number", "back", "soon", "later", "still", "again", "know", "let",
    "please", "send", "received", "wanted", "ask", "need", "check", "hello", "okay", "sure",
    "noted", "form", "next", "monday", "friday", "afternoon", "note", "record", "contact",
];

const FUNCTION: &[&str] = &[
    "i", "the", "to", "is", "a", "your", "we", "you", "for", "at", "on", "it", "this", "that", "and",
    "of", "in", "be", "will", "can", "have", "my", "me", "with",
];

const POSITIVE: &[&str] = &["good", "great", "thanks", "happy", "helpful", "glad", "relieved", "better"];
const NEGATIVE: &[&str] = &["worried", "upset", "frustrated", "terrible", "awful", "worse", "difficult", "scared"];

/// One planted topic: conversations carrying it get one of `keywords`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicPlant {
    pub topic_id: String,
    pub keywords: Vec<String>,
    /// Probability that a conversation carries the topic.
    pub rate: f64,
}

impl TopicPlant {
    pub fn new(topic_id: &str, keywords: &[&str], rate: f64) -> Self {
        Self {
            topic_id: topic_id.into(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_conversations: usize,
    /// Exactly this many conversations get 1 or 2 messages.
    pub n_short: usize,
    /// Message count range for the remaining conversations; lower bound ≥ 3.
    pub message_range: RangeInclusive<usize>,
    /// facet → weighted values.
    pub facets: IndexMap<String, Vec<(String, f64)>>,
    pub topics: Vec<TopicPlant>,
    /// Probability that each message besides the first mention repeats a
    /// planted topic's keyword.
    pub keyword_recurrence: f64,
    /// Weights of (positive, neutral, negative) conversation polarity.
    pub polarity_weights: [f64; 3],
    /// Monday 00:00 UTC of the first week.
    pub start: DateTime<Utc>,
    pub span_weeks: usize,
    /// Topic whose conversations are laid out as 1, 2, 3, ... per week.
    pub ramp_topic: Option<String>,
    pub seed: u64,
}

/// The stock topic plants, matching the default topic hierarchy leaves.
pub fn default_topic_plants() -> Vec<TopicPlant> {
    vec![
        TopicPlant::new("appointment", &["appointment", "reschedule", "booking", "calendar"], 0.25),
        TopicPlant::new("medication", &["refill", "pharmacy", "dosage", "pills"], 0.25),
        TopicPlant::new("transport", &["taxi", "parking", "bus", "ride"], 0.1),
        TopicPlant::new("prescription", &["prescription", "antibiotics", "inhaler", "insulin"], 0.2),
        TopicPlant::new("therapy", &["therapy", "physiotherapy", "counselling", "session"], 0.15),
        TopicPlant::new("symptoms", &["cough", "fever", "dizzy", "swelling"], 0.3),
        TopicPlant::new("exercise", &["walking", "exercise", "stretching", "steps"], 0.15),
        TopicPlant::new("social_services", &["housing", "benefits", "caseworker", "groceries"], 0.1),
        TopicPlant::new("family", &["daughter", "husband", "caregiver", "grandson"], 0.1),
    ]
}

pub fn default_facets() -> IndexMap<String, Vec<(String, f64)>> {
    let uniform = |vals: &[&str]| vals.iter().map(|v| (v.to_string(), 1.0)).collect::<Vec<_>>();
    IndexMap::from([
        ("clinic".to_string(), uniform(&["Clinic A", "Clinic B", "Clinic C", "Clinic D"])),
        ("patient_group".to_string(), uniform(&["CHF", "Diabetes", "Cancer", "COPD"])),
        ("age_group".to_string(), uniform(&["30-40", "40-50", "50-60", "60-70", "70-80", "80-90"])),
        ("gender".to_string(), uniform(&["Female", "Male"])),
    ])
}

impl SynthSpec {
    pub fn new(n_conversations: usize, seed: u64) -> Self {
        Self {
            n_conversations,
            n_short: 0,
            message_range: 3..=6,
            facets: default_facets(),
            topics: default_topic_plants(),
            keyword_recurrence: 0.5,
            polarity_weights: [0.35, 0.35, 0.3],
            start: Utc.with_ymd_and_hms(2017, 3, 6, 0, 0, 0).unwrap(),
            span_weeks: 26,
            ramp_topic: None,
            seed,
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.n_conversations == 0 {
            return bad("n_conversations must be positive".into());
        }
        if self.n_short > self.n_conversations {
            return bad("n_short exceeds n_conversations".into());
        }
        if *self.message_range.start() < 3 || self.message_range.is_empty() {
            return bad("message_range must start at 3 or more".into());
        }
        if !(0.0..=1.0).contains(&self.keyword_recurrence) {
            return bad("keyword_recurrence must lie in [0, 1]".into());
        }
        if self.span_weeks == 0 {
            return bad("span_weeks must be positive".into());
        }
        for facet in FACET_NAMES {
            match self.facets.get(facet) {
                Some(vs) if !vs.is_empty() && vs.iter().all(|(_, w)| *w >= 0.0) && vs.iter().any(|(_, w)| *w > 0.0) => {}
                _ => return bad(format!("facet {facet} needs at least one positive weight")),
            }
        }
        if self.polarity_weights.iter().any(|w| *w < 0.0) || self.polarity_weights.iter().sum::<f64>() <= 0.0 {
            return bad("polarity weights must be non-negative with positive sum".into());
        }
        let filler: HashSet<&str> = FILLER.iter().chain(FUNCTION).chain(POSITIVE).chain(NEGATIVE).copied().collect();
        let mut seen = HashSet::new();
        for plant in &self.topics {
            if plant.keywords.is_empty() || !(0.0..=1.0).contains(&plant.rate) {
                return bad(format!("topic {} needs keywords and a rate in [0,1]", plant.topic_id));
            }
            for kw in &plant.keywords {
                if filler.contains(kw.as_str()) || !seen.insert(kw.clone()) {
                    return bad(format!("keyword {kw} is not unique to topic {}", plant.topic_id));
                }
            }
        }
        if let Some(ramp) = &self.ramp_topic {
            if !self.topics.iter().any(|t| &t.topic_id == ramp) {
                return bad(format!("ramp topic {ramp} is not planted"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub conversation_id: String,
    pub message_count: usize,
    pub features: PatientFeatures,
    pub planted_topics: BTreeSet<String>,
    pub polarity: Polarity,
    pub start_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub entries: Vec<LedgerEntry>,
    pub short_count: usize,
    /// Per-week counts of the ramp topic, starting at the week of `start`.
    pub ramp_counts: Option<Vec<usize>>,
}

impl Ledger {
    pub fn count_with_topic(&self, topic: &str) -> usize {
        self.entries.iter().filter(|e| e.planted_topics.contains(topic)).count()
    }

    pub fn count_with_feature(&self, facet: &str, value: &str) -> usize {
        self.entries.iter().filter(|e| e.features.get(facet) == Some(value)).count()
    }
}

fn weighted<'a, R: Rng>(rng: &mut R, values: &'a [(String, f64)]) -> &'a str {
    let dist = WeightedIndex::new(values.iter().map(|(_, w)| *w)).expect("validated weights");
    &values[dist.sample(rng)].0
}

fn sentence<R: Rng>(rng: &mut R) -> Vec<String> {
    let n = rng.gen_range(4..=8);
    (0..n)
        .map(|_| {
            let pool = if rng.gen_bool(0.5) { FUNCTION } else { FILLER };
            pool.choose(rng).expect("non-empty").to_string()
        })
        .collect()
}

fn insert_word<R: Rng>(rng: &mut R, words: &mut Vec<String>, word: &str) {
    let at = rng.gen_range(0..=words.len());
    words.insert(at, word.to_string());
}

/// Generates a corpus and its ledger. Identical specs give identical output.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<(Corpus, Ledger), CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_conversations;

    let mut short = vec![false; n];
    short[..spec.n_short].iter_mut().for_each(|s| *s = true);
    short.shuffle(&mut rng);

    let polarity_dist = WeightedIndex::new(spec.polarity_weights).expect("validated weights");

    struct Draft {
        features: PatientFeatures,
        topics: BTreeSet<String>,
        polarity: Polarity,
        message_count: usize,
    }
    let drafts: Vec<Draft> = (0..n)
        .map(|i| {
            let mut pick = |facet: &str| weighted(&mut rng, &spec.facets[facet]).to_string();
            let features = PatientFeatures {
                clinic: pick("clinic"),
                patient_group: pick("patient_group"),
                age_group: pick("age_group"),
                gender: pick("gender"),
            };
            let topics = spec
                .topics
                .iter()
                .filter(|t| rng.gen_bool(t.rate))
                .map(|t| t.topic_id.clone())
                .collect();
            let polarity = [Polarity::Positive, Polarity::Neutral, Polarity::Negative][polarity_dist.sample(&mut rng)];
            let message_count = if short[i] { rng.gen_range(1..=2) } else { rng.gen_range(spec.message_range.clone()) };
            Draft { features, topics, polarity, message_count }
        })
        .collect();

    // Week index per conversation.
    let mut ramp_counts = None;
    let mut weeks = vec![0usize; n];
    let mut span = spec.span_weeks;
    if let Some(ramp) = &spec.ramp_topic {
        let mut counts: Vec<usize> = Vec::new();
        let (mut week, mut filled) = (0usize, 0usize);
        for (i, d) in drafts.iter().enumerate() {
            if d.topics.contains(ramp) {
                if filled == week + 1 {
                    week += 1;
                    filled = 0;
                }
                if filled == 0 {
                    counts.push(0);
                }
                weeks[i] = week;
                counts[week] += 1;
                filled += 1;
            }
        }
        span = span.max(counts.len());
        for (i, d) in drafts.iter().enumerate() {
            if !d.topics.contains(ramp) {
                weeks[i] = rng.gen_range(0..span);
            }
        }
        ramp_counts = Some(counts);
    } else {
        weeks.iter_mut().for_each(|w| *w = rng.gen_range(0..span));
    }

    let mut conversations = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for (i, d) in drafts.into_iter().enumerate() {
        let id = format!("c{:05}", i + 1);
        let offset = rng.gen_range(0..7 * 24 * 3600 - 24 * 3600);
        let mut t = spec.start + Duration::weeks(weeks[i] as i64) + Duration::seconds(offset);

        let mut texts: Vec<Vec<String>> = (0..d.message_count).map(|_| sentence(&mut rng)).collect();
        for topic in &d.topics {
            let plant = spec.topics.iter().find(|p| &p.topic_id == topic).expect("planted topic");
            let forced = rng.gen_range(0..texts.len());
            for (j, words) in texts.iter_mut().enumerate() {
                if j == forced || rng.gen_bool(spec.keyword_recurrence) {
                    let kw = plant.keywords.choose(&mut rng).expect("non-empty keywords");
                    insert_word(&mut rng, words, kw);
                }
            }
        }
        let pool = match d.polarity {
            Polarity::Positive => Some(POSITIVE),
            Polarity::Negative => Some(NEGATIVE),
            Polarity::Neutral => None,
        };
        if let Some(pool) = pool {
            let forced = rng.gen_range(0..texts.len());
            for (j, words) in texts.iter_mut().enumerate() {
                if j == forced || rng.gen_bool(0.5) {
                    let w = pool.choose(&mut rng).expect("non-empty pool");
                    insert_word(&mut rng, words, w);
                }
            }
        }

        let start_time = t;
        let messages = texts
            .into_iter()
            .enumerate()
            .map(|(j, words)| {
                let m = Message {
                    id: format!("{id}-m{:02}", j + 1),
                    conversation_id: id.clone(),
                    sender: if j % 2 == 0 { Sender::Patient } else { Sender::Provider },
                    timestamp: t,
                    text: words.join(" "),
                };
                t += Duration::minutes(rng.gen_range(1..=180));
                m
            })
            .collect();
        entries.push(LedgerEntry {
            conversation_id: id.clone(),
            message_count: d.message_count,
            features: d.features.clone(),
            planted_topics: d.topics,
            polarity: d.polarity,
            start_time,
        });
        conversations.push(Conversation::new(id, messages, d.features)?);
    }

    let mut schema = FacetSchema::new();
    for facet in FACET_NAMES {
        schema.insert(facet, spec.facets[facet].iter().map(|(v, _)| v.clone()).collect());
    }
    let corpus = Corpus::new(conversations, schema)?;
    Ok((corpus, Ledger { entries, short_count: spec.n_short, ramp_counts }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{filter_short, io::message_lines};

    fn lines(spec: &SynthSpec) -> Vec<String> {
        let (c, _) = generate_synthetic_corpus(spec).unwrap();
        message_lines(&c).collect()
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let spec = SynthSpec::new(50, 7);
        assert_eq!(lines(&spec), lines(&spec));
        assert_ne!(lines(&spec), lines(&SynthSpec::new(50, 8)));
    }

    #[test]
    fn zero_conversations_rejected() {
        assert!(matches!(generate_synthetic_corpus(&SynthSpec::new(0, 1)), Err(CorpusError::InvalidSpec(_))));
    }

    #[test]
    fn overlapping_keywords_rejected() {
        let mut spec = SynthSpec::new(10, 1);
        spec.topics = vec![TopicPlant::new("a", &["refill"], 0.5), TopicPlant::new("b", &["refill"], 0.5)];
        assert!(generate_synthetic_corpus(&spec).is_err());
    }

    #[test]
    fn short_conversations_are_exact() {
        let mut spec = SynthSpec::new(100, 3);
        spec.n_short = 37;
        let (c, ledger) = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(filter_short(&c, 3).len(), 63);
        assert_eq!(ledger.entries.iter().filter(|e| e.message_count < 3).count(), 37);
    }

    #[test]
    fn planted_keyword_marks_exactly_ledger_conversations() {
        let mut spec = SynthSpec::new(200, 5);
        spec.topics = vec![TopicPlant::new("medication", &["refill"], 0.4)];
        let (c, ledger) = generate_synthetic_corpus(&spec).unwrap();
        for (conv, entry) in c.conversations().iter().zip(&ledger.entries) {
            let has = conv.messages().iter().any(|m| m.text.split(' ').any(|w| w == "refill"));
            assert_eq!(has, entry.planted_topics.contains("medication"), "{}", conv.id());
        }
        let n = ledger.count_with_topic("medication");
        assert!(n > 50 && n < 110, "{n}");
    }

    #[test]
    fn ramp_layout_counts() {
        let mut spec = SynthSpec::new(300, 9);
        spec.ramp_topic = Some("prescription".into());
        let (_, ledger) = generate_synthetic_corpus(&spec).unwrap();
        let counts = ledger.ramp_counts.clone().unwrap();
        let (last, full) = counts.split_last().unwrap();
        for (i, c) in full.iter().enumerate() {
            assert_eq!(*c, i + 1);
        }
        assert!(*last >= 1 && *last <= counts.len());
        assert_eq!(counts.iter().sum::<usize>(), ledger.count_with_topic("prescription"));
    }
}

/// Embeddings for every word the generator can emit.
///
/// Keywords of one topic sit near a shared random direction, so they are
/// mutually similar and dissimilar to other topics; every other word gets an
/// independent random vector.
pub fn synthetic_embeddings(spec: &SynthSpec, dimension: usize) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_E3BE_DD16);
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dimension).map(|_| rng.sample(StandardNormal)).collect() };
    let mut out = Vec::new();
    for plant in &spec.topics {
        let base = gaussian(&mut rng);
        for kw in &plant.keywords {
            let noise = gaussian(&mut rng);
            out.push((kw.clone(), base.iter().zip(&noise).map(|(b, n)| b + 0.35 * n).collect()));
        }
    }
    for w in FILLER.iter().chain(FUNCTION).chain(POSITIVE).chain(NEGATIVE) {
        out.push((w.to_string(), gaussian(&mut rng)));
    }
    out
}
