use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use prefsum::Error as CoreError;
use serde::{Deserialize, Serialize};

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Core(e) => match e {
                CoreError::Precondition { .. } => StatusCode::PRECONDITION_FAILED,
                CoreError::Conflict(_) | CoreError::Exhausted => StatusCode::CONFLICT,
                CoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_REQUEST,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Storage(_) => "storage",
            ApiError::Core(e) => match e {
                CoreError::Precondition { .. } => "precondition",
                CoreError::Conflict(_) => "conflict",
                CoreError::Exhausted => "exhausted",
                CoreError::Io { .. } => "io",
                CoreError::Parse(_) => "parse",
                CoreError::SchemaMismatch { .. } => "schema_mismatch",
                CoreError::Infeasible(_) => "infeasible",
                CoreError::Validation(_) => "validation",
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code().into(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
