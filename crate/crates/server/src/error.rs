use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rlfa_core::AuditError;
use serde_json::json;

/// Error returned by a handler, rendered as `{"error": {"kind", "detail"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: String,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            kind: kind.to_string(),
            detail: detail.into(),
        }
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", detail)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    pub fn out_of_range(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "out_of_range", detail)
    }
}

impl From<AuditError> for ApiError {
    fn from(err: AuditError) -> Self {
        let status = match &err {
            AuditError::Validation(_)
            | AuditError::Format(_)
            | AuditError::Config(_)
            | AuditError::ImpossibleDraw { .. } => StatusCode::BAD_REQUEST,
            AuditError::Sequencing(_)
            | AuditError::Exhausted
            | AuditError::DegenerateDistribution(_) => StatusCode::CONFLICT,
            AuditError::Invariant(_) | AuditError::Io(_) | AuditError::Json(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        Self::new(status, err.kind(), err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.kind, "detail": self.detail } });
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
