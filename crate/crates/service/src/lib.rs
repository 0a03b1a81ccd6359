//! HTTP/JSON service over uploaded ECG records.
//!
//! Routes:
//! - `POST   /api/records` upload a CSV record and open a session
//! - `GET    /api/sessions/{id}/series?variant=&buckets=`
//! - `GET    /api/sessions/{id}/screen?variant=&alpha=`
//! - `GET    /api/sessions/{id}/quality?variant=&edge_bins=&z=`
//! - `DELETE /api/sessions/{id}`
//! - `GET    /api/health`

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lru::LruCache;
use mee_core::morph::MeeVariant;
use mee_core::quality::{DEFAULT_EDGE_BINS, DEFAULT_Z_THRESHOLD};
use mee_core::segmentation::{segment, SegmentConfig};
use mee_core::signal_io::{parse_annotations, parse_csv};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::{ApiError, ErrorBody};
pub use session::{Session, SeriesPayload, ScreenPayload};

pub const DEFAULT_BUCKETS: usize = 2000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    pub max_upload_bytes: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: 16,
            max_upload_bytes: 64 * 1024 * 1024,
            static_dir: None,
        }
    }
}

type SessionHandle = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<LruCache<String, SessionHandle>>>,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> Self {
        let cap = NonZeroUsize::new(config.max_sessions.max(1)).expect("≥ 1");
        Self {
            sessions: Arc::new(Mutex::new(LruCache::new(cap))),
        }
    }

    fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .lock()
            .expect("session store poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session store poisoned").len()
    }
}

pub fn router(config: &ServiceConfig) -> Router {
    router_with_state(config, AppState::new(config))
}

pub fn router_with_state(config: &ServiceConfig, state: AppState) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/records", post(upload))
        .route("/api/sessions/{id}", axum::routing::delete(delete_session))
        .route("/api/sessions/{id}/series", get(series))
        .route("/api/sessions/{id}/screen", get(screen))
        .route("/api/sessions/{id}/quality", get(quality))
        .layer(DefaultBodyLimit::max(config.max_upload_bytes))
        .layer(
            CorsLayer::new()
                .allow_origin(Any)
                .allow_methods(Any)
                .allow_headers(Any),
        )
        .with_state(state);
    match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind and serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(&config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
struct UploadJson {
    csv: String,
    fs: f64,
    lead: Option<String>,
    annotations: Option<String>,
    record_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct UploadResponse {
    session_id: String,
    record_id: String,
    lead: String,
    leads: Vec<String>,
    beat_count: usize,
    duration_s: f64,
    sampling_rate_hz: f64,
    labelled: bool,
}

struct UploadRequest {
    csv: String,
    fs: f64,
    lead: Option<String>,
    annotations: Option<String>,
    record_id: String,
}

fn parse_upload(
    headers: &HeaderMap,
    params: &HashMap<String, String>,
    body: &[u8],
) -> Result<UploadRequest, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_request("empty upload"));
    }
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if is_json {
        let j: UploadJson = serde_json::from_slice(body)
            .map_err(|e| ApiError::bad_request(format!("invalid JSON upload: {e}")))?;
        return Ok(UploadRequest {
            csv: j.csv,
            fs: j.fs,
            lead: j.lead,
            annotations: j.annotations,
            record_id: j.record_id.unwrap_or_else(|| "upload".into()),
        });
    }
    let csv = std::str::from_utf8(body)
        .map_err(|_| ApiError::bad_request("upload is not UTF-8 text"))?
        .to_string();
    let fs = params
        .get("fs")
        .ok_or_else(|| ApiError::bad_request("missing `fs` query parameter"))?
        .parse::<f64>()
        .map_err(|e| ApiError::bad_request(format!("bad `fs`: {e}")))?;
    Ok(UploadRequest {
        csv,
        fs,
        lead: params.get("lead").cloned(),
        annotations: None,
        record_id: params.get("record_id").cloned().unwrap_or_else(|| "upload".into()),
    })
}

async fn upload(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let body = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    let req = parse_upload(&headers, &params, &body)?;
    let built = tokio::task::spawn_blocking(move || build_session(req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let response = UploadResponse {
        session_id: built.session_id.clone(),
        record_id: built.record.record_id().to_string(),
        lead: built.lead.clone(),
        leads: built.record.lead_names().iter().map(|s| s.to_string()).collect(),
        beat_count: built.beats.len(),
        duration_s: built.record.duration_s(),
        sampling_rate_hz: built.record.sampling_rate_hz(),
        labelled: built.record.annotations().is_some(),
    };
    let id = built.session_id.clone();
    state
        .sessions
        .lock()
        .expect("session store poisoned")
        .put(id, Arc::new(Mutex::new(built)));
    Ok((StatusCode::CREATED, Json(response)).into_response())
}

fn build_session(req: UploadRequest) -> Result<Session, ApiError> {
    let mut record = parse_csv(&req.csv, &req.record_id, req.fs)
        .map_err(|e| ApiError::bad_request(format!("malformed record: {e}")))?;
    if let Some(text) = req.annotations.filter(|t| !t.trim().is_empty()) {
        let anns = parse_annotations(&text)
            .map_err(|e| ApiError::bad_request(format!("malformed annotations: {e}")))?;
        record = record
            .with_annotations(anns)
            .map_err(|e| ApiError::bad_request(format!("malformed annotations: {e}")))?;
    }
    let leads: Vec<String> = record.lead_names().iter().map(|s| s.to_string()).collect();
    let lead = match req.lead {
        Some(l) if leads.contains(&l) => l,
        Some(l) => {
            return Err(ApiError::bad_request(format!("lead `{l}` not in record")).with_leads(leads))
        }
        None if leads.len() == 1 => leads[0].clone(),
        None => {
            return Err(
                ApiError::bad_request("record has several leads; pass `lead`").with_leads(leads)
            )
        }
    };
    let beats = segment(&record, &lead, &SegmentConfig::default())
        .map_err(|e| ApiError::bad_request(e.to_string()))?
        .beats;
    Ok(Session::new(uuid::Uuid::new_v4().to_string(), record, lead, beats))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    state
        .sessions
        .lock()
        .expect("session store poisoned")
        .pop(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
}

fn variant_param(params: &HashMap<String, String>) -> Result<MeeVariant, ApiError> {
    match params.get("variant") {
        None => Ok(MeeVariant::II),
        Some(v) => v.parse::<MeeVariant>().map_err(ApiError::unprocessable),
    }
}

fn number_param<T: std::str::FromStr>(
    params: &HashMap<String, String>,
    key: &str,
    default: Option<T>,
) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    match (params.get(key), default) {
        (Some(v), _) => v
            .parse::<T>()
            .map_err(|e| ApiError::unprocessable(format!("bad `{key}`: {e}"))),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(ApiError::unprocessable(format!("missing `{key}`"))),
    }
}

/// Run `f` on the locked session off the async runtime.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
{
    let handle = state.get(id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = handle.lock().expect("session poisoned");
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn series(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<SeriesPayload>, ApiError> {
    let variant = variant_param(&params)?;
    let buckets: usize = number_param(&params, "buckets", Some(DEFAULT_BUCKETS))?;
    if buckets == 0 {
        return Err(ApiError::unprocessable("`buckets` must be ≥ 1"));
    }
    let payload = with_session(&state, &id, move |s| {
        let data = s.series(variant)?;
        Ok(session::series_payload(s, &data, buckets))
    })
    .await?;
    Ok(Json(payload))
}

async fn screen(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<ScreenPayload>, ApiError> {
    let variant = variant_param(&params)?;
    let alpha: f64 = number_param(&params, "alpha", None)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(ApiError::unprocessable(format!("`alpha` must be finite and ≥ 0, got {alpha}")));
    }
    let payload = with_session(&state, &id, move |s| {
        let data = s.series(variant)?;
        session::screen_payload(s, &data, alpha)
    })
    .await?;
    Ok(Json(payload))
}

async fn quality(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<mee_core::QualityReport>, ApiError> {
    let variant = variant_param(&params)?;
    let edge_bins: usize = number_param(&params, "edge_bins", Some(DEFAULT_EDGE_BINS))?;
    let z: f64 = number_param(&params, "z", Some(DEFAULT_Z_THRESHOLD))?;
    let report = with_session(&state, &id, move |s| s.quality(variant, edge_bins, z)).await?;
    Ok(Json(report))
}
