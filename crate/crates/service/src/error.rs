use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Every error leaves the service as `{code, message}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            code: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<edm_core::Error> for ApiError {
    fn from(e: edm_core::Error) -> ApiError {
        use edm_core::Error as E;
        let message = e.to_string();
        match e {
            E::Xml { .. } | E::Csv(_) | E::Serde(_) => ApiError::bad_request("parse_error", message),
            E::Config(_) => ApiError::bad_request("bad_mapping", message),
            E::Empty(_) => ApiError::bad_request("empty_input", message),
            E::InvalidArgument(_) | E::NotEnabled { .. } | E::InvalidNet(_) => {
                ApiError::bad_request("invalid_argument", message)
            }
            E::UnknownDecisionPoint(_) => ApiError::not_found("unknown_decision_point", message),
            E::TooManyUnits { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "too_many_units", message),
            E::AllDegenerate => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate", message),
            E::Io(_) => ApiError::internal(message),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> ApiError {
        ApiError::internal(e.to_string())
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
