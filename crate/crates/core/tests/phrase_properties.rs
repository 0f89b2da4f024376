use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use convoscope::corpus::{Conversation, Corpus, FacetSchema, Message, PatientFeatures, Sender};
use convoscope::phrase::{search, EmbeddingTable, MatchKind, PhraseQuery};
use proptest::prelude::*;

const WORDS: [&str; 10] = ["chest", "pain", "ache", "sore", "throat", "ride", "bus", "pills", "refill", "tired"];

fn table_10() -> EmbeddingTable {
    let vecs: [[f64; 4]; 10] = [
        [1.0, 0.2, 0.0, 0.1],
        [0.1, 1.0, 0.1, 0.0],
        [0.15, 0.95, 0.2, 0.05],
        [0.0, 0.8, 0.4, 0.1],
        [0.7, 0.3, 0.1, 0.0],
        [0.0, 0.0, 1.0, 0.2],
        [0.0, 0.1, 0.9, 0.4],
        [0.2, 0.0, 0.1, 1.0],
        [0.3, 0.0, 0.2, 0.9],
        [0.4, 0.4, 0.4, 0.4],
    ];
    EmbeddingTable::from_pairs(WORDS.iter().zip(vecs).map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
}

fn corpus(texts: &[&str]) -> Corpus {
    let t0 = Utc.with_ymd_and_hms(2021, 5, 3, 8, 0, 0).unwrap();
    let features = PatientFeatures {
        clinic: "A".into(),
        patient_group: "CHF".into(),
        age_group: "60-70".into(),
        gender: "Female".into(),
    };
    let convs = texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let id = format!("c{i:02}");
            let m = Message {
                id: format!("{id}-m01"),
                conversation_id: id.clone(),
                sender: Sender::Patient,
                timestamp: t0 + Duration::hours(i as i64),
                text: text.to_string(),
            };
            Conversation::new(id, vec![m], features.clone()).unwrap()
        })
        .collect();
    Corpus::new(convs, FacetSchema::new()).unwrap()
}

const TEXTS: [&str; 8] = [
    "my chest pain is back",
    "sore throat and tired",
    "need a ride on the bus",
    "ache in my chest today",
    "pills refill please",
    "Chest Pain again!",
    "tired and sore",
    "throat ache",
];

#[test]
fn ache_matches_pain() {
    let pain = vec![1.0, 0.0];
    let ache = vec![0.95, (1.0f64 - 0.95 * 0.95).sqrt()];
    let table = EmbeddingTable::from_pairs([
        ("pain".to_string(), pain),
        ("ache".to_string(), ache),
        ("bus".to_string(), vec![0.0, 1.0]),
        ("ride".to_string(), vec![-0.3, 1.0]),
    ])
    .unwrap();
    let c = corpus(&["ache", "bus ride"]);
    let result = search(&PhraseQuery::new("pain", 0.6).unwrap(), &c, &table);
    assert_eq!(result.hits.len(), 1);
    let hit = &result.hits[0];
    assert_eq!(hit.conversation_id, "c00");
    assert_eq!(hit.matched_span.kind, MatchKind::Similar);
    assert!((hit.best_score - 0.95).abs() < 1e-12);
}

#[test]
fn exact_matches_rank_first_at_one() {
    let c = corpus(&TEXTS);
    let result = search(&PhraseQuery::new("chest pain", 0.3).unwrap(), &c, &table_10());
    let exact: Vec<&str> = result.hits.iter().filter(|h| h.matched_span.kind == MatchKind::Exact).map(|h| h.conversation_id.as_str()).collect();
    assert_eq!(exact, ["c00", "c05"]);
    assert!(result.hits[..2].iter().all(|h| h.best_score == 1.0));
    assert!(result.hits[2..].iter().all(|h| h.best_score <= 1.0 && h.matched_span.kind == MatchKind::Similar));
    assert!(result.hits.len() > 2);
}

fn hit_set(query: &str, tau: f64, table: &EmbeddingTable, c: &Corpus) -> Vec<(String, f64)> {
    search(&PhraseQuery::new(query, tau).unwrap(), c, table).hits.into_iter().map(|h| (h.conversation_id, h.best_score)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn raising_tau_only_removes_hits(q in 0usize..10, r in 0usize..10, t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let c = corpus(&TEXTS);
        let table = table_10();
        let query = format!("{} {}", WORDS[q], WORDS[r]);
        let loose: BTreeSet<String> = hit_set(&query, lo, &table, &c).into_iter().map(|h| h.0).collect();
        let strict: BTreeSet<String> = hit_set(&query, hi, &table, &c).into_iter().map(|h| h.0).collect();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn scaling_embeddings_changes_nothing(q in 0usize..10, scale in 0.01f64..100.0, tau in 0.05f64..1.0) {
        let c = corpus(&TEXTS);
        let table = table_10();
        let a = hit_set(WORDS[q], tau, &table, &c);
        let b = hit_set(WORDS[q], tau, &table.scaled(scale), &c);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.0, &y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-9);
        }
    }
}

#[test]
fn table_text_round_trips() {
    let table = table_10().scaled(1.0 / 3.0);
    let back = EmbeddingTable::read(table.to_text().as_bytes()).unwrap();
    assert_eq!(back, table);
}

#[test]
fn synthetic_keywords_cluster_by_topic() {
    use convoscope::corpus::synth::{synthetic_embeddings, SynthSpec};
    use convoscope::phrase::cosine;
    let spec = SynthSpec::new(10, 3);
    let table = EmbeddingTable::from_pairs(synthetic_embeddings(&spec, 24)).unwrap();
    let v = |w: &str| table.get(w).unwrap().to_vec();
    let same = cosine(&v("refill"), &v("pharmacy")).unwrap();
    let other = cosine(&v("refill"), &v("taxi")).unwrap();
    assert!(same > 0.6 && same > other + 0.3, "same {same}, other {other}");
}
