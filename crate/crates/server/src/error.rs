use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use chronotopic::bundle::BundleError;
use chronotopic::queries::QueryError;

/// Machine-readable error codes. The set is closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownTopic,
    BadParam,
    EmptyQuery,
    NoVocabMatch,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::UnknownTopic => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

#[derive(Debug, thiserror::Error, Serialize)]
#[error("{message}")]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { status: code.status(), code, message: message.into() }
    }

    pub fn bad_param(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadParam, message)
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let code = match e {
            QueryError::EmptyQuery => ErrorCode::EmptyQuery,
            QueryError::NoVocabularyMatch(_) => ErrorCode::NoVocabMatch,
            QueryError::UnknownNode(_) => ErrorCode::UnknownTopic,
            QueryError::UnprunedGraph(_) | QueryError::InvalidLimit | QueryError::InvalidCount { .. } => ErrorCode::BadParam,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        ApiError::bad_param(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
