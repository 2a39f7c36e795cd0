use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Error reported to HTTP clients as `{"error":{"code","message","offset"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub offset: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            offset: None,
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn overloaded() -> Self {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "OVERLOADED",
            "too many concurrent requests, try again later",
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl From<geostore_core::Error> for ApiError {
    fn from(e: geostore_core::Error) -> Self {
        use geostore_core::Error as E;
        let status = match &e {
            E::Parse { .. }
            | E::MalformedBbox(_)
            | E::UnsupportedFormat(_)
            | E::UnsupportedEncoding(_)
            | E::XmlMalformed { .. }
            | E::JsonMalformed { .. } => StatusCode::BAD_REQUEST,
            E::MalformedPath(_) | E::NotFound(_) | E::UnknownId(_) => StatusCode::NOT_FOUND,
            E::DuplicateId(_) | E::IncompatibleParents(_) => StatusCode::CONFLICT,
            E::Corrupt(_) | E::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code().into(),
            message: e.to_string(),
            offset: e.offset(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(offset) = self.offset {
            error["offset"] = offset.into();
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}
