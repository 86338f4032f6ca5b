use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use glyphforge_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("{0}")]
    MalformedIndex(String),
    #[error("sample {id:?} changed since version {given}")]
    ConflictingWrite { id: String, given: String },
    #[error("{0}")]
    BadPageParams(String),
    #[error("{0}")]
    BadImage(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSample(_) => "unknown_sample",
            ServiceError::UnknownModel(_) => "unknown_model",
            ServiceError::MalformedIndex(_) => "malformed_index",
            ServiceError::ConflictingWrite { .. } => "conflicting_write",
            ServiceError::BadPageParams(_) => "bad_page_params",
            ServiceError::BadImage(_) => "bad_image",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSample(_) | ServiceError::UnknownModel(_) => StatusCode::NOT_FOUND,
            ServiceError::ConflictingWrite { .. } => StatusCode::CONFLICT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::MalformedIndex { .. } => ServiceError::MalformedIndex(e.to_string()),
            CoreError::InvalidImage(_) => ServiceError::BadImage(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
