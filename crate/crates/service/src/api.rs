//! HTTP+JSON endpoints.
//!
//! Reads take the current snapshot and never block writers for long; a
//! refit builds a new snapshot off to the side and swaps it in whole.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use convoscope::analytics::{weekly_trend, FacetProportions, FilterSelection, SelectionError, SelectionIssue, TopicCount, TopicLevel};
use convoscope::corpus::{PatientFeatures, Sender};
use convoscope::lda::{fit_lda, LdaConfig};
use convoscope::phrase::{PhraseQuery, DEFAULT_TAU};
use convoscope::sentiment::SentimentBin;
use serde::{Deserialize, Serialize};

use crate::labels::{export_csv, LabelStore, Presence, TopicVerdict, Verdict};
use crate::snapshot::{discovered_id, lda_documents, Snapshot};

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    labels: Mutex<LabelStore>,
    refit: tokio::sync::Mutex<()>,
    lda_path: Option<PathBuf>,
}

impl AppState {
    /// `lda_path`, when set, receives the dump of every refit model.
    pub fn new(snapshot: Snapshot, labels: LabelStore, lda_path: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            labels: Mutex::new(labels),
            refit: tokio::sync::Mutex::new(()),
            lda_path,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn swap(&self, next: Snapshot) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/overview", get(overview))
        .route("/facets", get(facets))
        .route("/topics", get(topics))
        .route("/trends", get(trends))
        .route("/conversation/{id}", get(conversation))
        .route("/search", get(search))
        .route("/labels", post(post_label))
        .route("/export/labels.csv", get(export_labels))
        .route("/lda/refit", post(refit_lda))
        .with_state(state)
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(Vec<SelectionIssue>),
    NotFound(String),
    Unavailable(String),
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    issues: Vec<SelectionIssue>,
}

impl ApiError {
    fn bad(field: &str, message: impl Into<String>) -> Self {
        Self::BadRequest(vec![SelectionIssue { field: field.into(), message: message.into() }])
    }
}

impl From<SelectionError> for ApiError {
    fn from(e: SelectionError) -> Self {
        Self::BadRequest(e.issues)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, issues) = match self {
            Self::BadRequest(issues) => (StatusCode::BAD_REQUEST, "invalid request".to_string(), issues),
            Self::NotFound(m) => (StatusCode::NOT_FOUND, m, Vec::new()),
            Self::Unavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, m, Vec::new()),
            Self::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m, Vec::new()),
        };
        let mut resp = (status, Json(ErrorBody { error: &error, issues })).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut().insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
        }
        resp
    }
}

type Params = Query<BTreeMap<String, String>>;

fn parse_selection(params: &BTreeMap<String, String>) -> Result<FilterSelection, ApiError> {
    match params.get("selection").map(|s| s.trim()) {
        None | Some("") => Ok(FilterSelection::default()),
        Some(raw) => serde_json::from_str(raw).map_err(|e| ApiError::bad("selection", e.to_string())),
    }
}

fn parse_flag(params: &BTreeMap<String, String>, name: &str) -> Result<bool, ApiError> {
    match params.get(name).map(String::as_str) {
        None | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") | Some("") => Ok(true),
        Some(other) => Err(ApiError::bad(name, format!("expected true or false, got {other:?}"))),
    }
}

#[derive(Serialize)]
struct Health {
    conversations: usize,
    topics: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let snap = state.snapshot();
    Json(Health { conversations: snap.corpus().len(), topics: snap.hierarchy().nodes().len() })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TopicRow {
    pub id: String,
    pub label: String,
    pub parent_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct OverviewEntry {
    pub id: String,
    pub start_time: DateTime<Utc>,
    /// Presence per row of `topics`, in the same order.
    pub topics: Vec<bool>,
    /// Share of messages per sentiment bin, -2 to +2.
    pub sentiment: [f64; 5],
    pub features: PatientFeatures,
    pub in_selection: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct OverviewPayload {
    pub topics: Vec<TopicRow>,
    pub universe: usize,
    pub selected: usize,
    pub conversations: Vec<OverviewEntry>,
}

async fn overview(State(state): State<Arc<AppState>>, Query(params): Params) -> Result<Json<OverviewPayload>, ApiError> {
    let selection = parse_selection(&params)?;
    let include_context = parse_flag(&params, "include_context")?;
    let snap = state.snapshot();
    let index = snap.index();
    let matched = index.apply(&snap.resolve(&selection)?);
    let rows: Vec<&str> = index.topic_rows().collect();
    let hierarchy = snap.hierarchy();
    let topics = rows
        .iter()
        .map(|id| {
            let node = hierarchy.get(id).expect("indexed topic");
            TopicRow { id: node.id.clone(), label: node.label.clone(), parent_id: node.parent_id.clone() }
        })
        .collect();
    let conversations = (0..index.len())
        .filter(|&i| include_context || matched.contains(i))
        .map(|i| {
            let id = &index.ids()[i];
            let conv = snap.corpus().get(id).expect("indexed conversation");
            let enrichment = snap.enrichment(id).expect("enriched conversation");
            OverviewEntry {
                id: id.clone(),
                start_time: index.start_time(i),
                topics: rows.iter().map(|t| index.has_topic(i, t)).collect(),
                sentiment: enrichment.distribution.proportions(),
                features: conv.features().clone(),
                in_selection: matched.contains(i),
            }
        })
        .collect();
    Ok(Json(OverviewPayload { topics, universe: index.len(), selected: matched.count_ones(..), conversations }))
}

async fn facets(State(state): State<Arc<AppState>>, Query(params): Params) -> Result<Json<FacetProportions>, ApiError> {
    let selection = parse_selection(&params)?;
    let snap = state.snapshot();
    let resolved = snap.resolve(&selection)?;
    Ok(Json(snap.index().facet_proportions(&resolved)))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TopicsPayload {
    pub selected: usize,
    pub topics: Vec<TopicCount>,
}

async fn topics(State(state): State<Arc<AppState>>, Query(params): Params) -> Result<Json<TopicsPayload>, ApiError> {
    let selection = parse_selection(&params)?;
    let snap = state.snapshot();
    let resolved = snap.resolve(&selection)?;
    let selected = snap.index().apply(&resolved).count_ones(..);
    Ok(Json(TopicsPayload { selected, topics: snap.index().topic_counts(&resolved) }))
}

async fn trends(State(state): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let selection = parse_selection(&params)?;
    let level = match params.get("level") {
        None => TopicLevel::Parent,
        Some(raw) => raw.parse::<TopicLevel>().map_err(|e| ApiError::bad("level", e))?,
    };
    let snap = state.snapshot();
    let resolved = snap.resolve(&selection)?;
    Ok(Json(weekly_trend(snap.index(), &resolved, level)).into_response())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct MessageView {
    pub id: String,
    pub sender: Sender,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub score: f64,
    pub bin: SentimentBin,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ConversationPayload {
    pub id: String,
    pub start_time: DateTime<Utc>,
    pub features: PatientFeatures,
    pub topics: Vec<String>,
    pub probabilities: BTreeMap<String, f64>,
    pub sentiment: [f64; 5],
    pub messages: Vec<MessageView>,
}

async fn conversation(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ConversationPayload>, ApiError> {
    let snap = state.snapshot();
    let conv = snap.corpus().get(&id).ok_or_else(|| ApiError::NotFound(format!("no conversation {id}")))?;
    let e = snap.enrichment(&id).expect("enriched conversation");
    let messages = conv
        .messages()
        .iter()
        .zip(e.message_scores.iter().zip(&e.message_bins))
        .map(|(m, (score, bin))| MessageView {
            id: m.id.clone(),
            sender: m.sender,
            timestamp: m.timestamp,
            text: m.text.clone(),
            score: *score,
            bin: *bin,
        })
        .collect();
    Ok(Json(ConversationPayload {
        id: conv.id().to_string(),
        start_time: conv.start_time(),
        features: conv.features().clone(),
        topics: e.topics.iter().cloned().collect(),
        probabilities: e.probabilities.clone(),
        sentiment: e.distribution.proportions(),
        messages,
    }))
}

async fn search(State(state): State<Arc<AppState>>, Query(params): Params) -> Result<Response, ApiError> {
    let phrase = params.get("phrase").ok_or_else(|| ApiError::bad("phrase", "missing"))?;
    let tau = match params.get("tau") {
        None => DEFAULT_TAU,
        Some(raw) => raw.parse::<f64>().map_err(|e| ApiError::bad("tau", e.to_string()))?,
    };
    let query = PhraseQuery::new(phrase, tau).map_err(|e| ApiError::bad("phrase", e.to_string()))?;
    Ok(Json(state.snapshot().search(&query)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub conversation_id: String,
    pub topic_id: String,
    pub verdict: Verdict,
    pub annotator_id: String,
}

async fn post_label(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: LabelRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad("body", e.to_string()))?;
    let snap = state.snapshot();
    let mut issues = Vec::new();
    let enrichment = snap.enrichment(&req.conversation_id);
    if enrichment.is_none() {
        issues.push(SelectionIssue { field: "conversation_id".into(), message: format!("unknown conversation {:?}", req.conversation_id) });
    }
    if !snap.hierarchy().contains(&req.topic_id) {
        issues.push(SelectionIssue { field: "topic_id".into(), message: format!("unknown topic {:?}", req.topic_id) });
    }
    if req.annotator_id.trim().is_empty() {
        issues.push(SelectionIssue { field: "annotator_id".into(), message: "empty annotator".into() });
    }
    let Some(enrichment) = enrichment.filter(|_| issues.is_empty()) else {
        return Err(ApiError::BadRequest(issues));
    };
    let verdict = TopicVerdict {
        model_prediction: Presence::from_bool(enrichment.topics.contains(&req.topic_id)),
        conversation_id: req.conversation_id,
        topic_id: req.topic_id,
        verdict: req.verdict,
        annotator_id: req.annotator_id,
        recorded_at: Utc::now(),
    };
    let mut store = state.labels.lock().map_err(|_| ApiError::Unavailable("label store unavailable".into()))?;
    store.record(verdict.clone()).map_err(|e| ApiError::Unavailable(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(verdict)).into_response())
}

async fn export_labels(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let verdicts = state.labels.lock().map_err(|_| ApiError::Unavailable("label store unavailable".into()))?.verdicts();
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], export_csv(&verdicts)).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitRequest {
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DiscoveredRow {
    pub id: String,
    pub label: Vec<String>,
    pub weight: f64,
}

async fn refit_lda(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Vec<DiscoveredRow>>, ApiError> {
    let req: RefitRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RefitRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad("body", e.to_string()))?
    };
    let mut config = LdaConfig::new(req.k.unwrap_or(3), req.seed.unwrap_or(0));
    if let Some(n) = req.iterations {
        config.iterations = n;
    }
    let _guard = state.refit.lock().await;
    let current = state.snapshot();
    let lda_path = state.lda_path.clone();
    let next = tokio::task::spawn_blocking(move || -> Result<Snapshot, ApiError> {
        let model = fit_lda(&lda_documents(current.corpus()), &config).map_err(|e| ApiError::bad("k", e.to_string()))?;
        if let Some(path) = lda_path {
            std::fs::write(&path, model.to_dump()).map_err(|e| ApiError::Unavailable(format!("{}: {e}", path.display())))?;
        }
        current.with_lda(Some(model)).map_err(|e| ApiError::Internal(e.to_string()))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let rows = next
        .resources()
        .lda
        .as_ref()
        .expect("just fitted")
        .topics()
        .into_iter()
        .map(|t| DiscoveredRow { id: discovered_id(t.topic_index), label: t.label, weight: t.weight })
        .collect();
    state.swap(next);
    Ok(Json(rows))
}
