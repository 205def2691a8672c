//! Route handlers.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use prefsum::config::RunConfig;
use prefsum::corpus::{featurize_concepts, ConceptUnit, Document, DocumentCluster};
use prefsum::session::{QueryView, Session, Snapshot, Stage, SummaryQuery};
use prefsum::simuser::{make_synthetic_cluster, SyntheticSpec};
use prefsum::SummaryRecord;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::store::{Entry, LogLine, Store};

pub type AppState = Arc<Store>;

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/query", get(next_query))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/pool", get(pool))
        .route("/sessions/{id}/summary-query", get(summary_query))
        .route("/sessions/{id}/summary-preference", post(summary_preference))
        .route("/sessions/{id}/summary-score", post(summary_score))
        .route("/sessions/{id}/rating", post(rating))
        .route("/sessions/{id}/log", get(log))
        .with_state(store)
}

/// Cluster source for a new session: exactly one of the three fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<DocumentCluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<Vec<Document>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
    #[serde(default)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub spec: SyntheticSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub cluster_id: String,
    pub stage: Stage,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub stage: Stage,
    pub round: usize,
    pub events: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairLabel {
    pub left: usize,
    pub right: usize,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreBody {
    pub summary: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RatingBody {
    pub score: u8,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryStage {
    #[default]
    Draft,
    Final,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct SummaryParams {
    #[serde(default)]
    pub stage: SummaryStage,
}

fn cluster_of(req: CreateRequest) -> ApiResult<(DocumentCluster, RunConfig)> {
    let config = req.config;
    let cluster = match (req.cluster, req.documents, req.synthetic) {
        (Some(c), None, None) => c,
        (None, Some(docs), None) => {
            let unit: ConceptUnit = config.unit;
            featurize_concepts(DocumentCluster::from_documents("upload", docs, Vec::new(), unit)?, None)?
        }
        (None, None, Some(s)) => {
            let spec = SyntheticSpec { unit: config.unit, ..s.spec };
            make_synthetic_cluster(&spec, s.seed)?.cluster
        }
        _ => return Err(ApiError::BadRequest("give exactly one of `cluster`, `documents` or `synthetic`".into())),
    };
    Ok((cluster, config))
}

/// Run `f` on one session off the async executor, holding its lock.
async fn with_session<T: Send + 'static>(
    store: &Store,
    id: &str,
    f: impl FnOnce(&mut Entry) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let entry: Arc<Mutex<Entry>> = store.get(id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = entry.lock().map_err(|_| ApiError::Storage("session lock poisoned".into()))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::Storage(e.to_string()))?
}

fn accepted(s: &Session) -> Accepted {
    Accepted { stage: s.stage(), round: s.history().len(), events: s.events().len() }
}

async fn create_session(
    State(store): State<AppState>,
    body: Result<Json<CreateRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let store2 = store.clone();
    let created = tokio::task::spawn_blocking(move || {
        let (cluster, config) = cluster_of(req)?;
        let id = store2.create(cluster, config)?;
        let entry = store2.get(&id)?;
        let guard = entry.lock().map_err(|_| ApiError::Storage("session lock poisoned".into()))?;
        Ok::<_, ApiError>(Created {
            cluster_id: guard.session.cluster().id.clone(),
            stage: guard.session.stage(),
            config: guard.session.config().clone(),
            id,
        })
    })
    .await
    .map_err(|e| ApiError::Storage(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_sessions(State(store): State<AppState>) -> Json<Vec<String>> {
    Json(store.ids())
}

async fn state(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Snapshot>> {
    with_session(&store, &id, |e| Ok(e.session.snapshot())).await.map(Json)
}

async fn next_query(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<QueryView>> {
    with_session(&store, &id, |e| e.run(|s| s.next_query())).await.map(Json)
}

fn parse<T>(body: Result<Json<T>, axum::extract::rejection::JsonRejection>) -> ApiResult<T> {
    body.map(|Json(b)| b).map_err(|e| ApiError::BadRequest(e.body_text()))
}

type Body<T> = Result<Json<T>, axum::extract::rejection::JsonRejection>;

async fn feedback(State(store): State<AppState>, Path(id): Path<String>, body: Body<PairLabel>) -> ApiResult<Json<Accepted>> {
    let b = parse(body)?;
    with_session(&store, &id, move |e| {
        e.run(|s| s.feedback(b.left, b.right, b.label).map(|ev| ((), ev)))?;
        Ok(accepted(&e.session))
    })
    .await
    .map(Json)
}

async fn summary(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<SummaryParams>,
) -> ApiResult<Json<SummaryRecord>> {
    with_session(&store, &id, move |e| {
        let s = &e.session;
        let summary = match params.stage {
            SummaryStage::Draft => s.draft()?,
            SummaryStage::Final => s.final_summary()?.clone(),
        };
        Ok(summary.record(s.cluster()))
    })
    .await
    .map(Json)
}

async fn pool(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<SummaryRecord>>> {
    with_session(&store, &id, |e| {
        let s = &e.session;
        let pool = s.pool().ok_or_else(|| {
            prefsum::Error::Precondition { stage: s.stage().to_string(), message: "the pool is not built yet".into() }
        })?;
        Ok(pool.summaries.iter().map(|p| p.record(s.cluster())).collect())
    })
    .await
    .map(Json)
}

async fn summary_query(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Option<SummaryQuery>>> {
    with_session(&store, &id, |e| Ok(e.session.summary_query()?)).await.map(Json)
}

async fn summary_preference(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Body<PairLabel>,
) -> ApiResult<Json<Accepted>> {
    let b = parse(body)?;
    with_session(&store, &id, move |e| {
        e.run(|s| s.summary_preference(b.left, b.right, b.label).map(|ev| ((), ev)))?;
        Ok(accepted(&e.session))
    })
    .await
    .map(Json)
}

async fn summary_score(State(store): State<AppState>, Path(id): Path<String>, body: Body<ScoreBody>) -> ApiResult<Json<Accepted>> {
    let b = parse(body)?;
    with_session(&store, &id, move |e| {
        e.run(|s| s.summary_score(b.summary, b.score).map(|ev| ((), ev)))?;
        Ok(accepted(&e.session))
    })
    .await
    .map(Json)
}

async fn rating(State(store): State<AppState>, Path(id): Path<String>, body: Body<RatingBody>) -> ApiResult<Json<Accepted>> {
    let b = parse(body)?;
    with_session(&store, &id, move |e| {
        e.run(|s| s.rate(b.score).map(|ev| ((), ev)))?;
        Ok(accepted(&e.session))
    })
    .await
    .map(Json)
}

async fn log(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<LogLine>>> {
    with_session(&store, &id, |_| Ok(())).await?;
    store.log(&id).map(Json)
}
