//! HTTP facade over a coordinate engine: volume sessions, PNG slices, point
//! queries and landmark navigation.
//!
//! | method | path                       |
//! |--------|----------------------------|
//! | POST   | `/volumes`                 |
//! | GET    | `/volumes/{id}/slice`      |
//! | POST   | `/volumes/{id}/query`      |
//! | POST   | `/volumes/{id}/landmark`   |
//! | GET    | `/atlas`                   |

use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bodygps::atlas::{AtlasError, NormalizedCoord};
use bodygps::metaimage;
use bodygps::tasks::{self, NavigationOptions, NavigationResult, PositionModel};
use bodygps::{Volume, WorldPoint};
use lru::LruCache;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub mod slice;

pub use slice::{render_slice, SliceAxis, SliceError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Upload limit for `POST /volumes`, bytes.
    pub max_upload_bytes: usize,
    /// Sessions kept before the least recently used one is evicted.
    pub max_sessions: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_upload_bytes: 1 << 30,
            max_sessions: 8,
        }
    }
}

pub struct Session {
    pub id: String,
    pub volume: Volume,
    pub created_at: SystemTime,
}

/// Shared, read-mostly server state.
pub struct AppState {
    engine: Arc<dyn PositionModel>,
    sessions: Mutex<LruCache<String, Arc<Session>>>,
    counter: AtomicU64,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(engine: Arc<dyn PositionModel>, config: ServiceConfig) -> Arc<Self> {
        let cap = NonZeroUsize::new(config.max_sessions.max(1)).expect("max(1) is nonzero");
        Arc::new(Self {
            engine,
            sessions: Mutex::new(LruCache::new(cap)),
            counter: AtomicU64::new(0),
            config,
        })
    }

    /// Registers `volume` and returns its session id.
    pub fn insert_volume(&self, volume: Volume) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("vol-{:08x}", n + 1);
        let session = Arc::new(Session {
            id: id.clone(),
            volume,
            created_at: SystemTime::now(),
        });
        self.sessions
            .lock()
            .expect("session table poisoned")
            .put(id.clone(), session);
        id
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
    }
}

/// JSON error response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/volumes", post(upload_volume).layer(DefaultBodyLimit::max(limit)))
        .route("/volumes/{id}/slice", get(get_slice))
        .route("/volumes/{id}/query", post(query_point))
        .route("/volumes/{id}/landmark", post(landmark))
        .route("/atlas", get(get_atlas))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VolumeInfo {
    pub session_id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub intensity_range: [f32; 2],
}

async fn upload_volume(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<VolumeInfo>, ApiError> {
    let image = metaimage::parse_mha(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let volume = image
        .into_volume()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let g = *volume.geometry();
    let (lo, hi) = volume.intensity_range();
    let session_id = state.insert_volume(volume);
    Ok(Json(VolumeInfo {
        session_id,
        dims: g.dims,
        spacing: g.spacing,
        origin: g.origin,
        intensity_range: [lo, hi],
    }))
}

#[derive(Debug, Deserialize)]
struct SliceParams {
    axis: String,
    index: usize,
    window: Option<String>,
}

fn parse_window(s: &str) -> Option<(f32, f32)> {
    let (lo, hi) = s.split_once(',')?;
    let (lo, hi) = (lo.trim().parse::<f32>().ok()?, hi.trim().parse::<f32>().ok()?);
    (lo.is_finite() && hi.is_finite() && hi > lo).then_some((lo, hi))
}

async fn get_slice(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<SliceParams>,
) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let axis: SliceAxis = params
        .axis
        .parse()
        .map_err(|e: SliceError| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let window = match params.window.as_deref() {
        Some(w) => parse_window(w).ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, format!("window must be `lo,hi` with lo < hi, got `{w}`"))
        })?,
        None => session.volume.intensity_range(),
    };
    let png = render_slice(&session.volume, axis, params.index, window).map_err(|e| match e {
        SliceError::IndexOutOfRange { .. } => ApiError::new(StatusCode::RANGE_NOT_SATISFIABLE, e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Deserialize)]
struct QueryBody {
    point_mm: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    pub normalized: NormalizedCoord,
    pub atlas_point_mm: WorldPoint,
    pub label: u8,
    pub label_name: String,
    pub latency_us: f64,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

async fn query_point(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<QueryResponse>, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let q: QueryBody = parse_json(&body)?;
    let p = WorldPoint::from(q.point_mm);
    if !p.is_finite() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "point_mm must be finite"));
    }
    let r = tasks::query(state.engine.as_ref(), &session.volume, p);
    Ok(Json(QueryResponse {
        normalized: r.coord,
        atlas_point_mm: r.atlas_point,
        label: r.label,
        label_name: r.label_name,
        latency_us: r.latency_us,
    }))
}

#[derive(Debug, Deserialize)]
struct LandmarkBody {
    name: Option<String>,
    target_normalized: Option<[f64; 3]>,
    max_iters: Option<usize>,
    starts: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LandmarkResponse {
    pub point_mm: WorldPoint,
    pub path: Vec<WorldPoint>,
    pub converged: bool,
    pub iterations: usize,
    /// Per-start results when more than one start was given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<NavigationResult>,
}

const MAX_LANDMARK_ITERS: usize = 50;

async fn landmark(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<LandmarkResponse>, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let req: LandmarkBody = parse_json(&body)?;
    let atlas = state.engine.atlas();
    let target = match (&req.name, req.target_normalized) {
        (Some(name), _) => atlas.landmark_normalized(name).map_err(|e| match e {
            AtlasError::MissingLandmark { name, available } => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({
                    "error": format!("unknown landmark `{name}`"),
                    "available": available,
                }),
            },
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })?,
        (None, Some(c)) => NormalizedCoord(c),
        (None, None) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "body needs `name` or `target_normalized`",
            ))
        }
    };
    let opts = NavigationOptions {
        max_iters: req.max_iters.unwrap_or(MAX_LANDMARK_ITERS).clamp(1, MAX_LANDMARK_ITERS),
        ..NavigationOptions::default()
    };
    let starts: Vec<WorldPoint> = match req.starts {
        Some(s) if !s.is_empty() => s.into_iter().map(WorldPoint::from).collect(),
        _ => vec![session.volume.geometry().center()],
    };
    let engine = Arc::clone(&state.engine);
    let result = tokio::task::spawn_blocking(move || {
        starts
            .iter()
            .map(|&s| tasks::navigate(engine.as_ref(), &session.volume, target, s, &opts))
            .collect::<Result<Vec<_>, _>>()
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;

    let finals: Vec<WorldPoint> = result.iter().map(|r| r.final_point).collect();
    let point_mm = tasks::coordinate_median(&finals);
    let first = &result[0];
    Ok(Json(LandmarkResponse {
        point_mm,
        path: first.path.clone(),
        converged: result.iter().all(|r| r.converged),
        iterations: result.iter().map(|r| r.iterations).max().unwrap_or(0),
        agents: if result.len() > 1 { result } else { Vec::new() },
    }))
}

async fn get_atlas(State(state): State<Arc<AppState>>) -> Json<bodygps::atlas::AtlasManifest> {
    Json(state.engine.atlas().manifest())
}
