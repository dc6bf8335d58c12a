use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use claimtriage::llm::Progress;
use serde_json::json;
use thiserror::Error;

/// Failures outside a request: startup, configuration, CLI file handling.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing scores for facet {facet}: {detail}")]
    MissingScores { facet: String, detail: String },
    #[error(transparent)]
    Store(#[from] claimtriage::store::StoreError),
    #[error(transparent)]
    Embed(#[from] claimtriage::embed::EmbedError),
    #[error(transparent)]
    Classifier(#[from] claimtriage::classifier::ClassifierError),
    #[error(transparent)]
    Llm(#[from] claimtriage::llm::LlmError),
    #[error(transparent)]
    Rank(#[from] claimtriage::rank::RankError),
    #[error(transparent)]
    Stats(#[from] claimtriage::stats::StatsError),
    #[error(transparent)]
    Telemetry(#[from] claimtriage::telemetry::TelemetryError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A request failure, rendered as a JSON body with an `error` field.
#[derive(Debug, Error, PartialEq)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    BadRequest { message: String, key: Option<String> },
    #[error("{0}")]
    Conflict(String),
    #[error("facet {facet} is still scoring ({}/{})", progress.done, progress.total)]
    Busy { facet: String, progress: Progress },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::BadRequest {
            message: message.into(),
            key: None,
        }
    }

    pub fn unknown_facet(key: &str) -> Self {
        Self::BadRequest {
            message: format!("unknown facet key {key:?} for this session"),
            key: Some(key.to_string()),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::BadRequest { .. } => StatusCode::BAD_REQUEST,
            Self::Conflict(_) | Self::Busy { .. } => StatusCode::CONFLICT,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        match &self {
            Self::BadRequest { key: Some(k), .. } => body["key"] = json!(k),
            Self::Busy { facet, progress } => {
                body["busy"] = json!(true);
                body["facet"] = json!(facet);
                body["progress"] = json!(progress);
            }
            _ => {}
        }
        (self.status(), Json(body)).into_response()
    }
}
