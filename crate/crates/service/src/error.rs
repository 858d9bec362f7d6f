use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use drape_core::deform::DeformError;
use drape_core::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Env(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// An error response: status code plus `{"error": message}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::InvalidState { .. } => StatusCode::CONFLICT,
            PipelineError::Deform(DeformError::Parse { .. }) => StatusCode::BAD_REQUEST,
            PipelineError::Deform(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::Config(_) | PipelineError::Geometry(_) => StatusCode::BAD_REQUEST,
            PipelineError::NonFinite { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<DeformError> for ApiError {
    fn from(e: DeformError) -> Self {
        PipelineError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}
