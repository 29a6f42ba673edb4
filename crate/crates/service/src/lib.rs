//! HTTP service over the decision-mining pipeline.
//!
//! Sessions hold an uploaded log and everything derived from it. Artifacts
//! live in a file-system store, so a restarted service serves the same
//! models. Training runs as a background job; predictions and explanations
//! are synchronous.

pub mod api;
pub mod config;
pub mod error;
pub mod jobs;
pub mod openapi;
pub mod store;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::{Json, Router};

pub use api::AppState;
pub use config::Config;
pub use error::ApiError;

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_upload_bytes;
    let dp = "/sessions/{session}/decision-points/{place}";
    Router::new()
        .route("/spec", get(openapi::spec))
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/sessions", post(api::create_session).get(api::list_sessions))
        .route("/sessions/{session}", get(api::get_session))
        .route("/sessions/{session}/discover", post(api::discover))
        .route("/sessions/{session}/decision-points", get(api::list_decision_points))
        .route(&format!("{dp}/train"), post(api::train))
        .route(&format!("{dp}/report"), get(api::report))
        .route(&format!("{dp}/predict"), post(api::predict))
        .route(&format!("{dp}/explain"), post(api::explain))
        .route(&format!("{dp}/global-explanation"), get(api::global))
        .route(&format!("{dp}/whatif"), post(api::whatif))
        .route("/jobs/{job}", get(api::job))
        .fallback(|| async { ApiError::not_found("not_found", "no such route") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves on an already bound listener until the task is cancelled.
pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port)).await?;
    let state = AppState::new(config)?;
    log::info!("listening on http://{}", listener.local_addr()?);
    serve_on(listener, state).await
}
