//! JSON-over-HTTP routes. Blocking inference runs on the blocking pool.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clickmat_core::Polarity;
use serde::Deserialize;

use crate::error::ServiceError;
use crate::service::MattingService;

pub const SIGMA_MIN_HEADER: &str = "x-sigma-min";
pub const SIGMA_MAX_HEADER: &str = "x-sigma-max";
pub const DOWNSCALED_HEADER: &str = "x-downscaled";

const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickRequest {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineBody {
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<MattingService>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn create(State(svc): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let state = blocking(move || svc.create_session(&body)).await?;
    let flag = HeaderValue::from_static(if state.downscaled { "true" } else { "false" });
    Ok((StatusCode::CREATED, [(DOWNSCALED_HEADER, flag)], Json(state)).into_response())
}

async fn click(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<ClickRequest>,
) -> Result<Response, ServiceError> {
    let state = blocking(move || svc.add_click(&id, req.row, req.col, req.polarity)).await?;
    Ok(Json(state).into_response())
}

async fn undo(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let state = blocking(move || svc.undo(&id)).await?;
    Ok(Json(state).into_response())
}

async fn refine(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<RefineBody>,
) -> Result<Response, ServiceError> {
    let out = blocking(move || svc.refine(&id, req.k)).await?;
    Ok(Json(out).into_response())
}

async fn state(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.state(&id)?).into_response())
}

async fn alpha(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(png(blocking(move || svc.alpha_png(&id)).await?))
}

async fn uncertainty(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let out = blocking(move || svc.uncertainty_png(&id)).await?;
    let header = |v: f32| HeaderValue::from_str(&v.to_string()).expect("float formats as a valid header");
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (header::HeaderName::from_static(SIGMA_MIN_HEADER), header(out.min)),
            (header::HeaderName::from_static(SIGMA_MAX_HEADER), header(out.max)),
        ],
        out.png,
    )
        .into_response())
}

async fn close(State(svc): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    svc.close(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(service: Arc<MattingService>) -> Router {
    Router::new()
        .route("/session", post(create))
        .route("/session/{id}", axum::routing::delete(close))
        .route("/session/{id}/click", post(click))
        .route("/session/{id}/undo", post(undo))
        .route("/session/{id}/refine", post(refine))
        .route("/session/{id}/state", get(state))
        .route("/session/{id}/alpha.png", get(alpha))
        .route("/session/{id}/uncertainty.png", get(uncertainty))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

/// Serves `service` on `addr` until the process is stopped.
pub async fn serve(service: MattingService, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(Arc::new(service))).await
}
