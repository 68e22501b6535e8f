use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

use crate::session::EXAMPLE_PHRASINGS;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),

    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("could not parse {utterance:?}")]
    Unparseable { utterance: String },

    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unparseable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<refcomm::Error> for ApiError {
    fn from(e: refcomm::Error) -> Self {
        use refcomm::Error as E;
        match e {
            E::WrongTurn { .. } | E::DialogueClosed => ApiError::Conflict(e.to_string()),
            E::InvalidConfig(_) | E::InvalidLogicalForm(_) | E::WeightMismatch(_) => {
                ApiError::BadRequest(e.to_string())
            }
            E::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ApiError::NotFound(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self {
            ApiError::Unparseable { .. } => json!({
                "error": self.to_string(),
                "examples": EXAMPLE_PHRASINGS,
            }),
            _ => json!({ "error": self.to_string() }),
        };
        (self.status(), Json(body)).into_response()
    }
}
