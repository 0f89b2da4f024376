mod common;

use std::collections::{BTreeMap, BTreeSet};

use axum::http::StatusCode;
use common::{fixture, get, json, post, with_query};
use convoscope::analytics::FilterSelection;
use convoscope_service::labels::{export_csv, parse_export, read_annotations, TopicVerdict, Verdict};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const READS: [&str; 4] = ["/overview", "/facets", "/topics", "/trends"];

fn selections() -> Vec<String> {
    vec![
        String::new(),
        r#"{"facets":{"clinic":["Clinic A","Clinic C"]}}"#.into(),
        r#"{"facets":{"gender":["Female"]},"topics":["treatment"]}"#.into(),
        r#"{"topics":["logistics","symptoms"],"time_range":["2017-03-06T00:00:00Z","2017-05-01T00:00:00Z"]}"#.into(),
        r#"{"phrase":{"text":"refill","tau":0.7}}"#.into(),
    ]
}

#[tokio::test]
async fn reads_are_byte_identical_between_writes() {
    let f = fixture(150, 4);
    let ids: Vec<String> = f.state.snapshot().index().ids().to_vec();
    for sel in selections() {
        for path in READS {
            let params = [("selection", sel.as_str()), ("include_context", "true")];
            let uri = with_query(path, &params[..if path == "/overview" { 2 } else { 1 }]);
            let (s1, a) = get(&f.app, &uri).await;
            let (s2, b) = get(&f.app, &uri).await;
            assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK), "{uri}: {}", String::from_utf8_lossy(&a));
            assert_eq!(a, b, "{uri}");
        }
    }
    let uri = format!("/conversation/{}", ids[3]);
    assert_eq!(get(&f.app, &uri).await, get(&f.app, &uri).await);
    // A verdict is a write to the label log only; analytics reads stay put.
    let before = get(&f.app, "/topics").await;
    let body = format!(r#"{{"conversation_id":"{}","topic_id":"exercise","verdict":"agree","annotator_id":"r1"}}"#, ids[0]);
    assert_eq!(post(&f.app, "/labels", &body).await.0, StatusCode::CREATED);
    assert_eq!(get(&f.app, "/topics").await, before);
}

#[tokio::test]
async fn malformed_requests_get_field_diagnostics() {
    let f = fixture(60, 1);
    let cases: [(&str, &[(&str, &str)], &str); 8] = [
        ("/overview", &[("selection", "{not json")], "selection"),
        ("/overview", &[("selection", r#"{"bogus":[]}"#)], "selection"),
        ("/facets", &[("selection", r#"{"facets":{"clinic":["Clinic Z"]}}"#)], "facets.clinic"),
        ("/topics", &[("selection", r#"{"topics":["ghost"]}"#)], "topics"),
        ("/trends", &[("level", "week")], "level"),
        ("/overview", &[("include_context", "maybe")], "include_context"),
        ("/search", &[("phrase", "   ")], "phrase"),
        ("/search", &[("phrase", "pain"), ("tau", "1.5")], "phrase"),
    ];
    for (path, params, field) in cases {
        let (status, body) = get(&f.app, &with_query(path, params)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{path} {params:?}");
        let v = json(&body);
        let fields: Vec<&str> = v["issues"].as_array().unwrap().iter().map(|i| i["field"].as_str().unwrap()).collect();
        assert!(fields.iter().any(|f| f.starts_with(field)), "{path} {params:?} gave {fields:?}");
    }
    let (status, _) = get(&f.app, "/search").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn conversation_detail_and_missing_ids() {
    let f = fixture(60, 2);
    let snap = f.state.snapshot();
    let id = &snap.index().ids()[5];
    let (status, body) = get(&f.app, &format!("/conversation/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    let conv = snap.corpus().get(id).unwrap();
    let messages = v["messages"].as_array().unwrap();
    assert_eq!(messages.len(), conv.len());
    for (m, orig) in messages.iter().zip(conv.messages()) {
        assert_eq!(m["text"], orig.text.as_str());
        let score = m["score"].as_f64().unwrap();
        assert!((-2.0..=2.0).contains(&score));
    }
    let shares: f64 = v["sentiment"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((shares - 1.0).abs() < 1e-9);
    assert_eq!(get(&f.app, "/conversation/nope").await.0, StatusCode::NOT_FOUND);
}

/// Latest-wins oracle kept beside the posts.
#[tokio::test]
async fn verdict_export_round_trip_with_supersedes() {
    let f = fixture(80, 3);
    let ids: Vec<String> = f.state.snapshot().index().ids()[..8].to_vec();
    let topics = ["medication", "symptoms", "family", "logistics"];
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut oracle: BTreeMap<(String, String, String), TopicVerdict> = BTreeMap::new();
    let mut superseded = 0;
    for _ in 0..100 {
        let conv = ids.choose(&mut rng).unwrap();
        let topic = topics.choose(&mut rng).unwrap();
        let who = format!("r{}", rng.gen_range(1..=3));
        let verdict = if rng.gen_bool(0.5) { "agree" } else { "disagree" };
        let body = format!(r#"{{"conversation_id":"{conv}","topic_id":"{topic}","verdict":"{verdict}","annotator_id":"{who}"}}"#);
        let (status, resp) = post(&f.app, "/labels", &body).await;
        assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&resp));
        let recorded: TopicVerdict = serde_json::from_slice(&resp).unwrap();
        let expected_prediction = f.state.snapshot().enrichment(conv).unwrap().topics.contains(*topic);
        assert_eq!(recorded.model_prediction.is_present(), expected_prediction);
        if oracle.insert((conv.clone(), topic.to_string(), who), recorded).is_some() {
            superseded += 1;
        }
    }
    assert!(superseded > 10, "only {superseded} supersedes");

    let (status, csv) = get(&f.app, "/export/labels.csv").await;
    assert_eq!(status, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    let rows = parse_export(&csv).unwrap();
    let expected: Vec<TopicVerdict> = oracle.values().cloned().collect();
    assert_eq!(rows, expected);
    assert_eq!(export_csv(&rows), csv);

    let annotations = read_annotations(&csv).unwrap();
    let labels: BTreeSet<(String, String, String, bool)> = annotations
        .records
        .iter()
        .map(|r| (r.conversation_id.clone(), r.topic_id.clone(), r.annotator_id.clone(), r.label))
        .collect();
    let derived: BTreeSet<_> = expected
        .iter()
        .map(|v| {
            let flip = v.verdict == Verdict::Disagree;
            (v.conversation_id.clone(), v.topic_id.clone(), v.annotator_id.clone(), v.model_prediction.is_present() != flip)
        })
        .collect();
    assert_eq!(labels, derived);

    // The log survives a restart.
    let reopened = convoscope_service::labels::LabelStore::open(f.layout.labels()).unwrap();
    assert_eq!(reopened.verdicts(), expected);
}

#[tokio::test]
async fn invalid_verdicts_are_rejected() {
    let f = fixture(40, 5);
    let id = f.state.snapshot().index().ids()[0].clone();
    let cases = [
        (r#"{"conversation_id":"ghost","topic_id":"family","verdict":"agree","annotator_id":"a"}"#.to_string(), "conversation_id"),
        (format!(r#"{{"conversation_id":"{id}","topic_id":"ghost","verdict":"agree","annotator_id":"a"}}"#), "topic_id"),
        (format!(r#"{{"conversation_id":"{id}","topic_id":"family","verdict":"maybe","annotator_id":"a"}}"#), "body"),
        (format!(r#"{{"conversation_id":"{id}","topic_id":"family","verdict":"agree","annotator_id":" "}}"#), "annotator_id"),
        (format!(r#"{{"conversation_id":"{id}","topic_id":"family","verdict":"agree","annotator_id":"a","x":1}}"#), "body"),
    ];
    for (body, field) in cases {
        let (status, resp) = post(&f.app, "/labels", &body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(json(&resp)["issues"][0]["field"], field);
    }
    let (_, csv) = get(&f.app, "/export/labels.csv").await;
    assert!(parse_export(&String::from_utf8(csv).unwrap()).unwrap().is_empty());
}

#[tokio::test]
async fn storage_failure_is_service_unavailable() {
    let f = fixture(40, 6);
    std::fs::create_dir(f.layout.labels()).unwrap();
    let id = f.state.snapshot().index().ids()[0].clone();
    let body = format!(r#"{{"conversation_id":"{id}","topic_id":"family","verdict":"agree","annotator_id":"a"}}"#);
    let (status, _) = post(&f.app, "/labels", &body).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (_, csv) = get(&f.app, "/export/labels.csv").await;
    assert!(parse_export(&String::from_utf8(csv).unwrap()).unwrap().is_empty(), "failed write became visible");
}

#[tokio::test]
async fn views_agree_with_each_other() {
    let f = fixture(200, 8);
    for sel in selections() {
        let (_, overview) = get(&f.app, &with_query("/overview", &[("selection", sel.as_str())])).await;
        let (_, topics) = get(&f.app, &with_query("/topics", &[("selection", sel.as_str())])).await;
        let (_, facets) = get(&f.app, &with_query("/facets", &[("selection", sel.as_str())])).await;
        let overview = json(&overview);
        let topics = json(&topics);
        let facets = json(&facets);
        let rows = overview["conversations"].as_array().unwrap();
        let selected = overview["selected"].as_u64().unwrap();
        assert_eq!(rows.len() as u64, selected);
        assert_eq!(topics["selected"], selected);
        assert_eq!(facets["selected"], selected);
        for counts in facets["facets"].as_object().unwrap().values() {
            let sum: u64 = counts.as_array().unwrap().iter().map(|c| c["matched"].as_u64().unwrap()).sum();
            assert_eq!(sum, selected);
        }

        let order: Vec<&str> = overview["topics"].as_array().unwrap().iter().map(|t| t["id"].as_str().unwrap()).collect();
        for level in ["parent", "leaf"] {
            let (_, trend) = get(&f.app, &with_query("/trends", &[("selection", sel.as_str()), ("level", level)])).await;
            let trend = json(&trend);
            for (topic, weekly) in trend["topics"].as_object().unwrap() {
                let total: u64 = weekly.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum();
                let col = order.iter().position(|t| t == topic).unwrap();
                let carrying = rows.iter().filter(|r| r["topics"][col].as_bool().unwrap()).count() as u64;
                assert_eq!(total, carrying, "{level} {topic} under {sel}");
                let row = topics["topics"].as_array().unwrap().iter().find(|t| t["topic_id"] == topic.as_str()).unwrap();
                assert_eq!(row["matched"].as_u64().unwrap(), carrying);
            }
        }
    }
}

#[tokio::test]
async fn overview_presence_follows_the_classifier() {
    let f = fixture(120, 9);
    let snap = f.state.snapshot();
    let model = snap.resources().model.as_ref().unwrap();
    let h = snap.hierarchy();
    let (_, body) = get(&f.app, "/overview?include_context=true").await;
    let v = json(&body);
    let order: Vec<&str> = v["topics"].as_array().unwrap().iter().map(|t| t["id"].as_str().unwrap()).collect();
    assert_eq!(order, h.display_order().iter().map(|n| n.id.as_str()).collect::<Vec<_>>());
    let rows = v["conversations"].as_array().unwrap();
    assert_eq!(rows.len(), snap.corpus().len());
    let times: Vec<(&str, &str)> = rows.iter().map(|r| (r["start_time"].as_str().unwrap(), r["id"].as_str().unwrap())).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    for row in rows {
        let conv = snap.corpus().get(row["id"].as_str().unwrap()).unwrap();
        let predicted = model.classifier.predict(h, &model.vectorizer.transform_conversation(conv)).unwrap().topics();
        for (col, id) in order.iter().enumerate() {
            assert_eq!(row["topics"][col].as_bool().unwrap(), predicted.contains(*id), "{} {id}", conv.id());
        }
        assert_eq!(row["in_selection"], true);
    }

    let sel = serde_json::to_string(&FilterSelection::new().with_facet("clinic", "Clinic B")).unwrap();
    let (_, body) = get(&f.app, &with_query("/overview", &[("selection", &sel), ("include_context", "true")])).await;
    let v = json(&body);
    let rows = v["conversations"].as_array().unwrap();
    assert_eq!(rows.len(), snap.corpus().len());
    for row in rows {
        assert_eq!(row["in_selection"].as_bool().unwrap(), row["features"]["clinic"] == "Clinic B");
    }
}

#[tokio::test]
async fn refit_adds_discovered_topics() {
    let f = fixture(80, 10);
    let (status, body) = post(&f.app, "/lda/refit", r#"{"k":2,"seed":3,"iterations":60}"#).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let discovered = json(&body);
    assert_eq!(discovered.as_array().unwrap().len(), 2);
    assert!(f.layout.lda().exists());
    let (_, topics) = get(&f.app, "/topics").await;
    let ids: Vec<String> =
        json(&topics)["topics"].as_array().unwrap().iter().map(|t| t["topic_id"].as_str().unwrap().to_string()).collect();
    for want in ["discovered", "discovered_0", "discovered_1"] {
        assert!(ids.iter().any(|i| i == want), "{want} missing from {ids:?}");
    }
    assert_eq!(post(&f.app, "/lda/refit", r#"{"k":0}"#).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&f.app, "/lda/refit", r#"{"topics":2}"#).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn phrase_search_and_phrase_filter_agree() {
    let f = fixture(120, 11);
    let (status, body) = get(&f.app, "/search?phrase=refill&tau=0.8").await;
    assert_eq!(status, StatusCode::OK);
    let hits: BTreeSet<String> =
        json(&body)["hits"].as_array().unwrap().iter().map(|h| h["conversation_id"].as_str().unwrap().to_string()).collect();
    assert!(!hits.is_empty());
    let sel = r#"{"phrase":{"text":"refill","tau":0.8}}"#;
    let (_, body) = get(&f.app, &with_query("/overview", &[("selection", sel)])).await;
    let ids: BTreeSet<String> =
        json(&body)["conversations"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap().to_string()).collect();
    assert_eq!(ids, hits);
}
