#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use convoscope::corpus::synth::SynthSpec;
use convoscope::topics::TrainConfig;
use convoscope_service::commands::{self, ResourcePaths};
use convoscope_service::labels::LabelStore;
use convoscope_service::{router, AppState, DataLayout, Snapshot};
use http_body_util::BodyExt;
use tower::ServiceExt;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub layout: DataLayout,
    pub state: Arc<AppState>,
    pub app: Router,
}

/// A synthetic data directory with a trained classifier, served in-process.
pub fn fixture(n: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let layout = DataLayout::new(dir.path());
    commands::synth(&layout, &SynthSpec::new(n, seed)).unwrap();
    commands::train(&layout, &[layout.annotations()], 0.0, &TrainConfig::default()).unwrap();
    let snapshot = Snapshot::build(commands::load_resources(&layout, &ResourcePaths::default()).unwrap()).unwrap();
    let labels = LabelStore::open(layout.labels()).unwrap();
    let state = AppState::new(snapshot, labels, Some(layout.lda()));
    let app = router(state.clone());
    Fixture { dir, layout, state, app }
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    send(app, req).await
}

/// `path?k=v&...` with the values percent-encoded.
pub fn with_query(path: &str, params: &[(&str, &str)]) -> String {
    format!("{path}?{}", serde_urlencoded::to_string(params).unwrap())
}

pub fn json(body: &[u8]) -> serde_json::Value {
    serde_json::from_slice(body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(body)))
}
