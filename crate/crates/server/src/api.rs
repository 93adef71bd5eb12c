//! HTTP routes over [`Session`]s.
//!
//! | route                          | body                       | reply                  |
//! |--------------------------------|----------------------------|------------------------|
//! | `POST /sessions`               | [`CreateSession`]          | 201 [`SessionSnapshot`] |
//! | `POST /sessions/{id}/rounds`   | none                       | 200 [`RoundQueries`]   |
//! | `POST /sessions/{id}/responses`| [`SubmitResponses`]        | 200/202 [`SubmitOutcome`] |
//! | `GET /sessions/{id}`           | none                       | 200 [`SessionSnapshot`] |
//!
//! Errors are `{"error": {"code", "message", "details"?}}`. A submit that
//! completes a round answers 202 and refits in the background; pass
//! `?wait=true` to get the reply after the refit.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use tackl::model::TripletResponse;

use crate::error::SessionError;
use crate::session::{CreateSession, Session, Status, SubmitOutcome};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitResponses {
    pub responses: Vec<TripletResponse>,
}

#[derive(Debug, Default, Deserialize)]
struct SubmitParams {
    #[serde(default)]
    wait: bool,
}

type Shared = Arc<Mutex<Session>>;

/// Sessions in memory, mirrored to a [`Store`] when one is configured.
pub struct AppState {
    sessions: RwLock<BTreeMap<u64, Shared>>,
    next_id: AtomicU64,
    store: Option<Store>,
}

impl AppState {
    pub fn in_memory() -> Arc<Self> {
        Arc::new(Self { sessions: RwLock::new(BTreeMap::new()), next_id: AtomicU64::new(1), store: None })
    }

    /// Loads every stored session. Rounds that were complete but not yet
    /// refitted are refitted here.
    pub fn with_store(store: Store) -> Result<Arc<Self>, SessionError> {
        let mut sessions = BTreeMap::new();
        for mut s in store.load_all()? {
            if s.status() == Status::Fitting {
                let job = s.fit_job()?;
                if let Err(e) = s.apply_fit(job.run()) {
                    error!("session {}: {e}", s.id());
                }
                store.save(&s)?;
            }
            sessions.insert(s.id(), Arc::new(Mutex::new(s)));
        }
        let next = sessions.keys().next_back().map_or(1, |k| k + 1);
        info!("loaded {} session(s) from {}", sessions.len(), store.root().display());
        Ok(Arc::new(Self { sessions: RwLock::new(sessions), next_id: AtomicU64::new(next), store: Some(store) }))
    }

    async fn get(&self, id: u64) -> Result<Shared, SessionError> {
        self.sessions.read().await.get(&id).cloned().ok_or(SessionError::NotFound(id))
    }

    fn persist(&self, s: &Session) -> Result<(), SessionError> {
        match &self.store {
            Some(store) => store.save(s),
            None => Ok(()),
        }
    }
}

pub struct ApiError(pub SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self(SessionError::Malformed(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(serde_json::json!({ "error": self.0.body() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/rounds", post(next_round))
        .route("/sessions/{id}/responses", post(submit_responses))
        .with_state(state)
}

fn join_error(e: tokio::task::JoinError) -> SessionError {
    SessionError::Fit(format!("worker task failed: {e}"))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(request) = body?;
    let id = app.next_id.fetch_add(1, Ordering::SeqCst);
    let session = Session::new(id, request)?;
    app.persist(&session)?;
    let snapshot = session.snapshot();
    app.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    info!("session {id} created");
    Ok((StatusCode::CREATED, Json(snapshot)))
}

async fn session_state(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<impl IntoResponse> {
    let shared = app.get(id).await?;
    let guard = shared.lock_owned().await;
    let snapshot = tokio::task::spawn_blocking(move || guard.snapshot()).await.map_err(join_error)?;
    Ok(Json(snapshot))
}

async fn next_round(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<impl IntoResponse> {
    let shared = app.get(id).await?;
    let mut guard = shared.lock_owned().await;
    let app2 = Arc::clone(&app);
    let out = tokio::task::spawn_blocking(move || {
        let r = guard.next_round();
        app2.persist(&guard)?;
        r
    })
    .await
    .map_err(join_error)??;
    Ok(Json(out))
}

async fn submit_responses(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Query(params): Query<SubmitParams>,
    body: Result<Json<SubmitResponses>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let shared = app.get(id).await?;
    let (mut outcome, job) = {
        let mut s = shared.lock().await;
        let outcome = s.submit(&body.responses)?;
        app.persist(&s)?;
        let job = if outcome.complete { Some(s.fit_job()?) } else { None };
        (outcome, job)
    };
    let Some(job) = job else {
        return Ok(Json(outcome).into_response());
    };

    let task = tokio::spawn(refit(Arc::clone(&app), shared, job));
    if !params.wait {
        return Ok((StatusCode::ACCEPTED, Json(outcome)).into_response());
    }
    outcome.status = task.await.map_err(join_error)??;
    Ok(Json::<SubmitOutcome>(outcome).into_response())
}

/// Runs a refit off the async workers, then applies and persists it.
async fn refit(app: Arc<AppState>, shared: Shared, job: crate::session::FitJob) -> Result<Status, SessionError> {
    let result = tokio::task::spawn_blocking(move || job.run()).await.map_err(join_error)?;
    let mut s = shared.lock().await;
    let applied = s.apply_fit(result);
    if let Err(e) = &applied {
        error!("session {}: {e}", s.id());
    }
    app.persist(&s)?;
    applied.map(|_| s.status())
}

/// Serves the API until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
