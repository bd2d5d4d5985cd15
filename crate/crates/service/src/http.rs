use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pbic_core::preference::PreferenceRecord;
use serde_json::json;

use crate::error::ServiceError;
use crate::store::{SessionConfig, Store};

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/pair", get(next_pair))
        .route("/sessions/{id}/preferences", post(record_preference))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/maps/{file}", get(map))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()) })
        .with_state(store)
}

fn json_text(status: StatusCode, value: &serde_json::Value) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json; charset=utf-8")], value.to_string()).into_response()
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn create_session(
    State(store): State<Arc<Store>>,
    payload: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let config = body(payload)?;
    let session = tokio::task::spawn_blocking(move || store.create(config))
        .await
        .map_err(|e| ServiceError::Storage(e.to_string()))??;
    tracing::info!(id = %session.id, grid = ?session.grid(), "session created");
    let value = json!({
        "session_id": session.id,
        "grid": session.grid(),
        "pbic_index": session.pbic_index(),
        "pbic_perplexity": session.grid()[session.pbic_index()],
        "show_labels": session.config.show_labels,
    });
    Ok(json_text(StatusCode::CREATED, &value))
}

async fn next_pair(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let pair = store.get(&id)?.next_pair().await?;
    Ok(json_text(StatusCode::OK, &serde_json::to_value(pair)?))
}

async fn record_preference(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    payload: Result<Json<PreferenceRecord>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let session = store.get(&id)?;
    let summary = session.record(body(payload)?).await?;
    Ok(json_text(StatusCode::OK, &summary))
}

async fn report(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let report = store.get(&id)?.report().await?;
    Ok(json_text(StatusCode::OK, &report))
}

async fn map(State(store): State<Arc<Store>>, Path((id, file)): Path<(String, String)>) -> Result<Response, ServiceError> {
    let session = store.get(&id)?;
    let index = file
        .strip_suffix(".svg")
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| ServiceError::NotFound(format!("{id}/maps/{file}")))?;
    let svg = session.map_svg(index)?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}
