use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use tackl::active::ActiveError;
use tackl::model::{TripletQuery, TripletResponse};

use crate::session::Status;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(u64),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot {action} while the session is {}", status.as_str())]
    InvalidState { action: &'static str, status: Status },
    #[error("session {0} is finished")]
    Finished(u64),
    #[error("response {response}: {message}")]
    InvalidResponse { response: TripletResponse, message: String },
    #[error("response {response} answers {query}, which was not issued this round")]
    NotIssued {
        response: TripletResponse,
        query: TripletQuery,
        issued: Vec<TripletQuery>,
    },
    #[error("query {query} already has an answer this round")]
    Duplicate { response: TripletResponse, query: TripletQuery },
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("query selection failed: {0}")]
    Select(#[from] ActiveError),
    #[error("refit failed: {0}")]
    Fit(String),
    #[error("storage: {0}")]
    Storage(String),
}

/// Machine-readable form of an error, as returned by the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "session_not_found",
            SessionError::InvalidManifest(_) => "invalid_manifest",
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::InvalidState { .. } => "invalid_state",
            SessionError::Finished(_) => "session_finished",
            SessionError::InvalidResponse { .. } => "invalid_response",
            SessionError::NotIssued { .. } => "query_not_issued",
            SessionError::Duplicate { .. } => "duplicate_response",
            SessionError::Malformed(_) => "malformed_request",
            SessionError::Select(_) => "selection_failed",
            SessionError::Fit(_) => "fit_failed",
            SessionError::Storage(_) => "storage_error",
        }
    }

    /// HTTP status code for the error.
    pub fn http_status(&self) -> u16 {
        match self {
            SessionError::NotFound(_) => 404,
            SessionError::Malformed(_) => 400,
            SessionError::InvalidManifest(_)
            | SessionError::InvalidConfig(_)
            | SessionError::InvalidResponse { .. }
            | SessionError::NotIssued { .. } => 422,
            SessionError::InvalidState { .. } | SessionError::Finished(_) | SessionError::Duplicate { .. } => 409,
            SessionError::Select(_) | SessionError::Fit(_) | SessionError::Storage(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let details = match self {
            SessionError::InvalidState { status, .. } => json!({ "status": status }),
            SessionError::InvalidResponse { response, .. } => json!({ "response": response }),
            SessionError::NotIssued { response, query, issued } => {
                json!({ "response": response, "query": query, "issued": issued })
            }
            SessionError::Duplicate { response, query } => json!({ "response": response, "query": query }),
            _ => Value::Null,
        };
        ErrorBody { code: self.code(), message: self.to_string(), details }
    }
}
