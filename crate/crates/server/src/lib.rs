//! HTTP service for running live audit sessions.
//!
//! Clients upload a population, open a session on it and then alternate
//! `draw` and `observe` calls until the interval is narrow enough. Numbers
//! are written with the shortest representation that round-trips, so a
//! client reads back exactly the engine's values.

mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use rlfa_core::engine::{Decision, SessionStatus};
use rlfa_core::{AuditSession, CsFamily, Interval, Population, SessionConfig, Strategy};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ApiResult};
pub use store::{SessionHandle, Store};

const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

pub type AppState = Arc<Store>;

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/populations", post(upload_population))
        .route("/populations/{id}", get(get_population))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/draw", post(draw))
        .route("/sessions/{id}/observe", post(observe))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/remaining", get(remaining))
        .route("/sessions/{id}/test", get(test_assertion))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(store)
}

/// Serves until ctrl-c. With `persist_dir`, sessions are loaded from and
/// saved to that directory.
pub async fn serve(addr: SocketAddr, persist_dir: Option<PathBuf>) -> std::io::Result<()> {
    let store = match persist_dir {
        Some(dir) => Store::open(dir).map_err(std::io::Error::other)?,
        None => Store::in_memory(),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// `[lo, hi]`, or `null` for an empty interval.
fn pair(interval: &Interval<f64>) -> Option<[f64; 2]> {
    (!interval.empty).then_some([interval.lo, interval.hi])
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn session_handle(store: &Store, id: &str) -> ApiResult<SessionHandle> {
    store
        .session(id)
        .ok_or_else(|| ApiError::not_found("session", id))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub population_id: String,
    pub n: usize,
    pub total_value: f64,
    pub has_scores: bool,
}

fn summarize(id: String, pop: &Population) -> PopulationSummary {
    PopulationSummary {
        population_id: id,
        n: pop.len(),
        total_value: pop.total_value(),
        has_scores: pop.scores().is_some(),
    }
}

/// Accepts either a multipart form with the CSV as its first file field or
/// the CSV as the raw request body.
async fn upload_population(
    State(store): State<AppState>,
    req: Request,
) -> ApiResult<(StatusCode, Json<PopulationSummary>)> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let bytes = if is_multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let field = form
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?
            .ok_or_else(|| ApiError::bad_request("multipart body has no fields"))?;
        field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?
    } else {
        axum::body::to_bytes(req.into_body(), MAX_UPLOAD_BYTES)
            .await
            .map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let population = Population::from_csv_reader(&bytes[..])?;
    let (id, population) = store.insert_population(population)?;
    Ok((StatusCode::CREATED, Json(summarize(id, &population))))
}

async fn get_population(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<PopulationSummary>> {
    let pop = store
        .population(&id)
        .ok_or_else(|| ApiError::not_found("population", &id))?;
    Ok(Json(summarize(id, &pop)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub population_id: String,
    pub epsilon: f64,
    pub delta: f64,
    pub strategy: Strategy,
    pub cs_family: CsFamily,
    #[serde(default)]
    pub control_variates: bool,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub grid_size: Option<usize>,
    /// Drawn at random and echoed back when omitted.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub score_accuracy: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub interval: Option<[f64; 2]>,
    pub seed: u64,
}

async fn create_session(
    State(store): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req = body(payload)?;
    let population = store
        .population(&req.population_id)
        .ok_or_else(|| ApiError::not_found("population", &req.population_id))?;
    let mut config = SessionConfig::new(req.epsilon, req.delta, req.strategy, req.cs_family);
    config.control_variates = req.control_variates;
    if let Some(b) = req.batch_size {
        config.batch_size = b;
    }
    if let Some(g) = req.grid_size {
        config.grid_size = g;
    }
    config.seed = req.seed.unwrap_or_else(rand::random);
    config.score_accuracy = req.score_accuracy;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = config.seed;
    let session = AuditSession::create(id.clone(), population, config)?;
    let interval = pair(&session.interval());
    store.insert_session(session)?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id,
            interval,
            seed,
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditedItem {
    pub index: usize,
    pub id: String,
    pub f: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DrawItem {
    pub index: usize,
    pub id: String,
    pub reported_value: f64,
    pub weight: f64,
    pub q_prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub t: usize,
    pub interval: Option<[f64; 2]>,
    pub width: f64,
    pub status: SessionStatus,
    pub stopped_at: Option<usize>,
    pub audited: Vec<AuditedItem>,
    pub pending: Option<Vec<DrawItem>>,
    pub n: usize,
    pub config: SessionConfig,
}

fn draw_items(session: &AuditSession) -> Option<Vec<DrawItem>> {
    let pop = session.population();
    session.pending().map(|pending| {
        pending
            .iter()
            .map(|p| DrawItem {
                index: p.index,
                id: pop.ids()[p.index].clone(),
                reported_value: pop.reported()[p.index],
                weight: pop.weights()[p.index],
                q_prob: p.q_prob,
            })
            .collect()
    })
}

async fn get_session(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionState>> {
    let handle = session_handle(&store, &id)?;
    let session = handle.lock().await;
    let ids = session.population().ids();
    Ok(Json(SessionState {
        session_id: id,
        t: session.t(),
        interval: pair(&session.interval()),
        width: session.width(),
        status: session.status(),
        stopped_at: session.stopped_at(),
        audited: session
            .history()
            .observations()
            .iter()
            .map(|o| AuditedItem {
                index: o.index,
                id: ids[o.index].clone(),
                f: o.f_obs,
            })
            .collect(),
        pending: draw_items(&session),
        n: session.population().len(),
        config: session.config().clone(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DrawResponse {
    pub indices: Vec<usize>,
    /// Round the drawn items belong to.
    pub t: usize,
    pub items: Vec<DrawItem>,
}

async fn draw(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<DrawResponse>> {
    let handle = session_handle(&store, &id)?;
    let mut session = handle.lock().await;
    let indices = session.next_draw()?;
    store.save(&session)?;
    Ok(Json(DrawResponse {
        indices,
        t: session.t() + 1,
        items: draw_items(&session).unwrap_or_default(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObservationIn {
    pub index: usize,
    pub f: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObserveRequest {
    pub observations: Vec<ObservationIn>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObserveResponse {
    pub interval: Option<[f64; 2]>,
    pub width: f64,
    pub stopped: bool,
    pub t: usize,
    pub status: SessionStatus,
}

async fn observe(
    State(store): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ObserveRequest>, JsonRejection>,
) -> ApiResult<Json<ObserveResponse>> {
    let handle = session_handle(&store, &id)?;
    let req = body(payload)?;
    if let Some(bad) = req
        .observations
        .iter()
        .find(|o| !(0.0..=1.0).contains(&o.f))
    {
        return Err(ApiError::out_of_range(format!(
            "misstated fraction for index {} must lie in [0, 1], got {}",
            bad.index, bad.f
        )));
    }
    let observed: Vec<(usize, f64)> = req.observations.iter().map(|o| (o.index, o.f)).collect();
    let mut session = handle.lock().await;
    let update = session.record_observation(&observed)?;
    store.save(&session)?;
    Ok(Json(ObserveResponse {
        interval: pair(&update.interval),
        width: update.width,
        stopped: update.stopped,
        t: update.t,
        status: session.status(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub audited: usize,
    pub interval: Option<[f64; 2]>,
    pub width: f64,
    pub prob_cs: Option<[f64; 2]>,
    pub logical: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceResponse {
    pub trace: Vec<TracePoint>,
}

async fn trace(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<TraceResponse>> {
    let handle = session_handle(&store, &id)?;
    let session = handle.lock().await;
    let trace = session
        .trace()
        .iter()
        .map(|e| TracePoint {
            t: e.t,
            audited: e.audited,
            interval: pair(&e.combined),
            width: e.width,
            prob_cs: pair(&e.prob_cs),
            logical: pair(&e.logical),
        })
        .collect();
    Ok(Json(TraceResponse { trace }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RemainingResponse {
    pub interval: Option<[f64; 2]>,
    pub audited_mass: f64,
}

async fn remaining(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<RemainingResponse>> {
    let handle = session_handle(&store, &id)?;
    let session = handle.lock().await;
    Ok(Json(RemainingResponse {
        interval: pair(&session.remaining_fraction_interval()),
        audited_mass: session.history().audited_mass(),
    }))
}

#[derive(Debug, Deserialize)]
struct TestQuery {
    epsilon: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TestResponse {
    pub decision: Decision,
    pub epsilon: f64,
}

/// Tests `m* <= epsilon`; `epsilon` defaults to the session's target width.
async fn test_assertion(
    State(store): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<TestQuery>, QueryRejection>,
) -> ApiResult<Json<TestResponse>> {
    let handle = session_handle(&store, &id)?;
    let Query(query) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let session = handle.lock().await;
    let epsilon = query.epsilon.unwrap_or(session.config().epsilon);
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(ApiError::bad_request(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    Ok(Json(TestResponse {
        decision: session.test_assertion(epsilon),
        epsilon,
    }))
}
