//! JSON-over-HTTP scoring service.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use absa_rl_core::data::FORMAT_VERSION;
use absa_rl_core::toy::TrainConfig;
use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::sync::Semaphore;

use crate::api::{self, ApiError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceOptions {
    /// Maximum concurrent scoring jobs.
    pub workers: usize,
    pub body_limit: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { workers: 4, body_limit: 2 * 1024 * 1024 }
    }
}

#[derive(Clone)]
struct AppState {
    config: Arc<TrainConfig>,
    pool: Arc<Semaphore>,
}

struct Failure(StatusCode, ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let Failure(status, e) = self;
        let body = json!({
            "error": status.canonical_reason().unwrap_or("error").to_lowercase(),
            "field": e.field,
            "reason": e.reason,
        });
        (status, Json(body)).into_response()
    }
}

/// Builds the service router. `config` supplies defaults that request
/// overrides are layered on.
pub fn router(config: TrainConfig, opts: ServiceOptions) -> Router {
    let state = AppState { config: Arc::new(config), pool: Arc::new(Semaphore::new(opts.workers.max(1))) };
    Router::new()
        .route("/health", get(health))
        .route("/score", post(score))
        .route("/filter", post(filter))
        .layer(DefaultBodyLimit::max(opts.body_limit))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "config": &*state.config,
    }))
}

fn body_bytes(body: Result<Bytes, BytesRejection>) -> Result<Bytes, Failure> {
    body.map_err(|e| Failure(e.status(), ApiError::new("body", e.body_text())))
}

/// Runs a handler on the blocking pool once a worker slot is free.
async fn run_job<Req, Rsp>(
    state: &AppState,
    body: Bytes,
    handler: impl FnOnce(&TrainConfig, Req) -> Result<Rsp, ApiError> + Send + 'static,
) -> Result<Rsp, Failure>
where
    Req: serde::de::DeserializeOwned + Send + 'static,
    Rsp: Send + 'static,
{
    let permit = state.pool.clone().acquire_owned().await.expect("worker pool closed");
    let config = state.config.clone();
    let job = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let req = api::parse_request::<Req>(&body)?;
        handler(&config, req)
    });
    match job.await {
        Ok(r) => r.map_err(|e| Failure(StatusCode::BAD_REQUEST, e)),
        Err(e) => Err(Failure(StatusCode::INTERNAL_SERVER_ERROR, ApiError::new("body", e.to_string()))),
    }
}

fn timed<T: Serialize>(rsp: T, started: Instant, set: impl FnOnce(&mut T, f64)) -> Json<T> {
    let mut rsp = rsp;
    set(&mut rsp, started.elapsed().as_secs_f64() * 1000.0);
    Json(rsp)
}

async fn score(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<impl IntoResponse, Failure> {
    let started = Instant::now();
    let body = body_bytes(body)?;
    let rsp = run_job(&state, body, |cfg: &TrainConfig, req| api::handle_score(&cfg.scoring, req)).await?;
    Ok(timed(rsp, started, |r, ms| r.elapsed_ms = ms))
}

async fn filter(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<impl IntoResponse, Failure> {
    let started = Instant::now();
    let body = body_bytes(body)?;
    let rsp = run_job(&state, body, api::handle_filter).await?;
    Ok(timed(rsp, started, |r, ms| r.elapsed_ms = ms))
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, config: TrainConfig, opts: ServiceOptions) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(config, opts))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
