//! JSON-over-HTTP access to one analysis bundle, under `/api/v1`.
//!
//! Reads work on an immutable revision snapshot. `POST /reprune` is the only
//! mutation: it builds a new revision off to the side and swaps it in, so
//! readers never wait on it and never see a half-updated state.

mod error;

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::header::{HeaderName, CONTENT_TYPE};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tower_http::cors::{Any, CorsLayer};

use chronotopic::bundle::AnalysisBundle;
use chronotopic::events::{events_to_json, EdgeRef, EventLabel};
use chronotopic::hdp::Topic;
use chronotopic::queries::{corpus_stats, search_topics, trace, word_cloud, Direction, WeightedTerm};
use chronotopic::relatedness::{Measure, NodeRef};

pub use error::{ApiError, ErrorCode};

pub const REVISION_HEADER: &str = "x-revision-hash";
const DEFAULT_CLOUD: usize = 20;
const DEFAULT_LIMIT: usize = 10;
const TOPIC_PREVIEW: usize = 10;

/// One immutable state of the analysis.
pub struct Revision {
    pub bundle: AnalysisBundle,
    pub hash: String,
}

impl Revision {
    fn new(bundle: AnalysisBundle) -> Self {
        let hash = bundle.revision_hash();
        Revision { bundle, hash }
    }
}

pub struct AppState {
    current: RwLock<Arc<Revision>>,
    writer: Mutex<()>,
    bundle_hash: String,
}

impl AppState {
    pub fn new(bundle: AnalysisBundle) -> Arc<Self> {
        let bundle_hash = bundle.content_hash().to_owned();
        Arc::new(AppState { current: RwLock::new(Arc::new(Revision::new(bundle))), writer: Mutex::new(()), bundle_hash })
    }

    pub fn snapshot(&self) -> Arc<Revision> {
        self.current.read().expect("revision lock").clone()
    }

    /// Content hash of the bundle as loaded.
    pub fn bundle_hash(&self) -> &str {
        &self.bundle_hash
    }

    /// Re-prunes one graph and installs the result as the current revision.
    pub fn reprune(&self, measure: Measure, zeta: f64) -> Result<Arc<Revision>, ApiError> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(ApiError::bad_param(format!("zeta {zeta} outside [0, 1]")));
        }
        let _one_writer = self.writer.lock().expect("writer lock");
        let base = self.snapshot();
        let next = Arc::new(Revision::new(base.bundle.reprune(measure, zeta)?));
        *self.current.write().expect("revision lock") = next.clone();
        Ok(next)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/epochs", get(epochs))
        .route("/epochs/{t}/topics", get(epoch_topics))
        .route("/topics/{t}/{id}", get(topic))
        .route("/topics/{t}/{id}/wordcloud", get(topic_word_cloud))
        .route("/topics/{t}/{id}/trace", get(topic_trace))
        .route("/graph", get(graph))
        .route("/events", get(events))
        .route("/stats", get(stats))
        .route("/search", get(search))
        .route("/reprune", post(reprune));
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([CONTENT_TYPE])
        .expose_headers([HeaderName::from_static(REVISION_HEADER)]);
    Router::new().nest("/api/v1", api).layer(cors).with_state(state)
}

/// Serves until `shutdown` resolves, then drains open connections.
pub async fn serve<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

fn reply(rev: &Revision, body: Result<String, ApiError>) -> Response {
    let mut resp = match body {
        Ok(text) => (StatusCode::OK, [(CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => e.into_response(),
    };
    if let Ok(v) = HeaderValue::from_str(&rev.hash) {
        resp.headers_mut().insert(REVISION_HEADER, v);
    }
    resp
}

fn to_json<T: Serialize>(value: &T) -> Result<String, ApiError> {
    Ok(serde_json::to_string(value).expect("response serializes"))
}

fn params(p: Params) -> Result<HashMap<String, String>, ApiError> {
    p.map(|Query(m)| m).map_err(|e| ApiError::bad_param(e.body_text()))
}

fn parse_opt<T: std::str::FromStr>(p: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    match p.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| ApiError::bad_param(format!("cannot parse {key}={v:?}"))),
    }
}

fn index(what: &str, raw: &str) -> Result<usize, ApiError> {
    raw.parse().map_err(|_| ApiError::bad_param(format!("{what} must be a non-negative integer, got {raw:?}")))
}

fn node_of(rev: &Revision, t: &str, id: &str) -> Result<NodeRef, ApiError> {
    let node = NodeRef::new(index("epoch", t)?, index("topic id", id)?);
    match rev.bundle.topic(node) {
        Some(_) => Ok(node),
        None => Err(ApiError::new(ErrorCode::UnknownTopic, format!("no topic {node}"))),
    }
}

fn labels_of(rev: &Revision, node: NodeRef) -> Vec<EventLabel> {
    rev.bundle.events().iter().find(|e| e.node() == node).map(|e| e.labels.iter().copied().collect()).unwrap_or_default()
}

async fn health(State(s): State<Arc<AppState>>) -> Response {
    let rev = s.snapshot();
    let body = json!({"status": "ok", "bundle_hash": s.bundle_hash(), "revision_hash": rev.hash});
    reply(&rev, Ok(body.to_string()))
}

#[derive(Serialize)]
struct EpochSummary {
    index: usize,
    start: String,
    end: String,
    document_count: usize,
    token_count: u64,
    topic_count: usize,
}

async fn epochs(State(s): State<Arc<AppState>>) -> Response {
    let rev = s.snapshot();
    let b = &rev.bundle;
    let list: Vec<EpochSummary> = b
        .epochs
        .iter()
        .zip(b.models.iter())
        .map(|(e, m)| EpochSummary {
            index: e.index,
            start: e.start.to_string(),
            end: e.end.to_string(),
            document_count: e.document_ids.len(),
            token_count: m.token_count(),
            topic_count: m.topics.len(),
        })
        .collect();
    reply(&rev, to_json(&list))
}

#[derive(Serialize)]
struct TopicSummary {
    epoch: usize,
    id: usize,
    mass: f64,
    token_count: u64,
    labels: Vec<EventLabel>,
    top_terms: Vec<WeightedTerm>,
}

fn summary(rev: &Revision, t: &Topic) -> Result<TopicSummary, ApiError> {
    let node = NodeRef::new(t.epoch, t.id);
    let n = TOPIC_PREVIEW.min(rev.bundle.vocabulary.len());
    Ok(TopicSummary {
        epoch: t.epoch,
        id: t.id,
        mass: t.mass,
        token_count: t.token_count,
        labels: labels_of(rev, node),
        top_terms: word_cloud(&rev.bundle, node, n)?,
    })
}

async fn epoch_topics(State(s): State<Arc<AppState>>, Path(t): Path<String>) -> Response {
    let rev = s.snapshot();
    let body = (|| {
        let t = index("epoch", &t)?;
        let model = rev.bundle.model(t).ok_or_else(|| ApiError::new(ErrorCode::UnknownTopic, format!("no epoch {t}")))?;
        let list = model.topics.iter().map(|topic| summary(&rev, topic)).collect::<Result<Vec<_>, _>>()?;
        to_json(&list)
    })();
    reply(&rev, body)
}

#[derive(Serialize)]
struct TopicDetail<'a> {
    epoch: usize,
    id: usize,
    mass: f64,
    token_count: u64,
    labels: Vec<EventLabel>,
    evidence: BTreeMap<EventLabel, &'a [EdgeRef]>,
    term_dist: &'a [f64],
}

async fn topic(State(s): State<Arc<AppState>>, Path((t, id)): Path<(String, String)>) -> Response {
    let rev = s.snapshot();
    let body = (|| {
        let node = node_of(&rev, &t, &id)?;
        let topic = rev.bundle.topic(node).expect("checked");
        let event = rev.bundle.events().iter().find(|e| e.node() == node);
        let detail = TopicDetail {
            epoch: node.epoch,
            id: node.id,
            mass: topic.mass,
            token_count: topic.token_count,
            labels: labels_of(&rev, node),
            evidence: event.map(|e| e.evidence.iter().map(|(l, v)| (*l, v.as_slice())).collect()).unwrap_or_default(),
            term_dist: &topic.term_dist,
        };
        to_json(&detail)
    })();
    reply(&rev, body)
}

async fn topic_word_cloud(State(s): State<Arc<AppState>>, Path((t, id)): Path<(String, String)>, q: Params) -> Response {
    let rev = s.snapshot();
    let body = (|| {
        let node = node_of(&rev, &t, &id)?;
        let p = params(q)?;
        let n = parse_opt(&p, "n")?.unwrap_or(DEFAULT_CLOUD.min(rev.bundle.vocabulary.len()));
        to_json(&word_cloud(&rev.bundle, node, n)?)
    })();
    reply(&rev, body)
}

async fn topic_trace(State(s): State<Arc<AppState>>, Path((t, id)): Path<(String, String)>, q: Params) -> Response {
    let rev = s.snapshot();
    let body = (|| {
        let node = node_of(&rev, &t, &id)?;
        let p = params(q)?;
        let direction = parse_opt::<Direction>(&p, "direction")?.unwrap_or(Direction::Backward);
        let measure = parse_opt::<Measure>(&p, "measure")?.unwrap_or(Measure::Bhattacharyya);
        let depth = parse_opt(&p, "depth")?.unwrap_or(rev.bundle.epochs.len());
        to_json(&trace(&rev.bundle, node, direction, measure, depth)?)
    })();
    reply(&rev, body)
}

async fn graph(State(s): State<Arc<AppState>>, q: Params) -> Response {
    let rev = s.snapshot();
    let body = (|| {
        let p = params(q)?;
        let measure = parse_opt::<Measure>(&p, "measure")?.unwrap_or(Measure::Bhattacharyya);
        let surviving = parse_opt::<bool>(&p, "surviving")?.unwrap_or(false);
        let g = rev.bundle.graph(measure);
        Ok(if surviving { g.to_json_surviving() } else { g.to_json() })
    })();
    reply(&rev, body)
}

async fn events(State(s): State<Arc<AppState>>) -> Response {
    let rev = s.snapshot();
    let body = Ok(events_to_json(rev.bundle.events()));
    reply(&rev, body)
}

async fn stats(State(s): State<Arc<AppState>>) -> Response {
    let rev = s.snapshot();
    let body = to_json(&corpus_stats(&rev.bundle));
    reply(&rev, body)
}

async fn search(State(s): State<Arc<AppState>>, q: Params) -> Response {
    let rev = s.snapshot();
    let body = (|| {
        let p = params(q)?;
        let limit = parse_opt(&p, "limit")?.unwrap_or(DEFAULT_LIMIT);
        let query = p.get("q").map(String::as_str).unwrap_or("");
        to_json(&search_topics(&rev.bundle, query, limit)?)
    })();
    reply(&rev, body)
}

fn reprune_request(body: Result<Json<Value>, JsonRejection>) -> Result<(Measure, f64), ApiError> {
    let Json(v) = body.map_err(|e| ApiError::bad_param(e.body_text()))?;
    let measure = v
        .get("measure")
        .and_then(Value::as_str)
        .ok_or_else(|| ApiError::bad_param("measure missing"))?
        .parse::<Measure>()
        .map_err(ApiError::bad_param)?;
    let zeta = v.get("zeta").and_then(Value::as_f64).ok_or_else(|| ApiError::bad_param("zeta missing or not a number"))?;
    Ok((measure, zeta))
}

async fn reprune(State(s): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> Response {
    let result = reprune_request(body).and_then(|(measure, zeta)| {
        let rev = s.reprune(measure, zeta)?;
        let count = rev.bundle.graph(measure).surviving_count();
        Ok((rev, measure, zeta, count))
    });
    match result {
        Ok((rev, measure, zeta, count)) => {
            let body = json!({
                "revision_hash": rev.hash,
                "surviving_edge_count": count,
                "measure": measure,
                "zeta": zeta,
            });
            reply(&rev, Ok(body.to_string()))
        }
        Err(e) => reply(&s.snapshot(), Err(e)),
    }
}
