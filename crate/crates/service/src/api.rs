//! HTTP routes over [`Engine`].

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::engine::{Engine, InterfaceMode, RankRequest};
use crate::error::ApiError;

type Shared = State<Arc<Engine>>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/claims/{id}", get(claim))
        .route("/sessions/{id}/rank", post(rank))
        .route("/sessions/{id}/facets", post(create_facet))
        .route("/sessions/{id}/facets/{key}/status", get(facet_status))
        .route("/sessions/{id}/selection", post(select))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/step-series", get(step_series))
        .with_state(engine)
}

async fn health(State(engine): Shared) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "claims": engine.store().len(),
        "scoring_mode": engine.config().scoring_mode,
    }))
}

#[derive(Deserialize)]
struct NewSession {
    mode: InterfaceMode,
}

async fn create_session(State(engine): Shared, Json(body): Json<NewSession>) -> impl IntoResponse {
    (StatusCode::CREATED, Json(engine.create_session(body.mode)))
}

async fn claim(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.claim(&id)?))
}

async fn rank(
    State(engine): Shared,
    Path(id): Path<String>,
    Json(req): Json<RankRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.rank(&id, &req)?))
}

#[derive(Deserialize)]
struct NewFacet {
    name: String,
    context: String,
}

async fn create_facet(
    State(engine): Shared,
    Path(id): Path<String>,
    Json(body): Json<NewFacet>,
) -> ApiResult<impl IntoResponse> {
    let (created, definition, job) = engine.create_facet(&id, &body.name, &body.context)?;
    let worker = Arc::clone(&engine);
    tokio::task::spawn_blocking(move || worker.run_facet_job(&definition, &job));
    Ok((StatusCode::ACCEPTED, Json(created)))
}

async fn facet_status(State(engine): Shared, Path((id, key)): Path<(String, String)>) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.facet_status(&id, &key)?))
}

#[derive(Deserialize)]
struct Selection {
    claim_id: String,
    selected: bool,
}

async fn select(
    State(engine): Shared,
    Path(id): Path<String>,
    Json(body): Json<Selection>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.select(&id, &body.claim_id, body.selected)?))
}

#[derive(Deserialize)]
struct Finalize {
    claim_ids: Vec<String>,
}

async fn finalize(
    State(engine): Shared,
    Path(id): Path<String>,
    Json(body): Json<Finalize>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.finalize(&id, &body.claim_ids)?))
}

async fn events(State(engine): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let body = engine.export_events(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn metrics(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.metrics(&id)?))
}

async fn step_series(State(engine): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let csv = engine.step_series_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}
