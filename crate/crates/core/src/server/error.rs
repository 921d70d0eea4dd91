use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;

use crate::manifest::{ManifestError, Violation};
use crate::store::StoreError;

pub const PROBLEM_CONTENT_TYPE: &str = "application/problem+json";

/// Error body: machine-readable `code`, human `message`, and for manifest
/// rejections the full list of field-anchored violations.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<Violation>>,
    #[serde(skip)]
    pub retry_after: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            violations: None,
            retry_after: None,
        }
    }

    pub fn unauthenticated() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthenticated",
            "a valid session is required",
        )
    }

    pub fn forbidden() -> Self {
        Self::new(
            StatusCode::FORBIDDEN,
            "permission-denied",
            "permission denied",
        )
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", "not found")
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn rate_limited(retry_after: u64) -> Self {
        Self {
            retry_after: Some(retry_after),
            ..Self::new(
                StatusCode::TOO_MANY_REQUESTS,
                "rate-limited",
                "too many shares, try again shortly",
            )
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StoreError::*;
        let (status, code) = match &e {
            DuplicateNameVersion => (StatusCode::CONFLICT, "duplicate-name-version"),
            DuplicateHandle => (StatusCode::CONFLICT, "duplicate-handle"),
            DuplicatePending => (StatusCode::CONFLICT, "duplicate-pending"),
            PermissionDenied => (StatusCode::FORBIDDEN, "permission-denied"),
            NotAdmin => (StatusCode::FORBIDDEN, "not-admin"),
            UnknownUser | Unauthenticated => (StatusCode::UNAUTHORIZED, "unauthenticated"),
            BadCredentials => (StatusCode::UNAUTHORIZED, "bad-credentials"),
            NotFound | NoSuchRequest => (StatusCode::NOT_FOUND, "not-found"),
            MalformedBlob => (StatusCode::BAD_REQUEST, "malformed-blob"),
            InvalidHandle(_) => (StatusCode::BAD_REQUEST, "invalid-handle"),
            Storage(detail) => {
                log::error!("storage failure: {detail}");
                return Self::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "internal",
                    "internal error",
                );
            }
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<ManifestError> for ApiError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::MalformedDocument(detail) => Self::new(
                StatusCode::BAD_REQUEST,
                "malformed-manifest",
                format!("manifest is not a JSON document: {detail}"),
            ),
            ManifestError::Invalid(report) => Self {
                violations: Some(report.violations),
                ..Self::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid-manifest",
                    "manifest failed validation",
                )
            },
        }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    status: u16,
    #[serde(flatten)]
    inner: &'a ApiError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&Body {
            status: self.status.as_u16(),
            inner: &self,
        })
        .expect("problem document serializes");
        let mut res = (self.status, body).into_response();
        let headers = res.headers_mut();
        headers.insert(
            header::CONTENT_TYPE,
            HeaderValue::from_static(PROBLEM_CONTENT_TYPE),
        );
        if let Some(secs) = self.retry_after {
            headers.insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        res
    }
}
