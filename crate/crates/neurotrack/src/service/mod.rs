//! HTTP + websocket session service.
//!
//! Every session runs on its own thread; handlers talk to it only through
//! its request channel and read a snapshot copied out after each request or
//! step.

mod protocol;
mod session;

pub use protocol::{ClientCommand, ClientMessage, Phase, ServerMessage, SessionSnapshot, TrialEventKind};
pub use session::{ExportKind, TaskName, TaskReply, TaskRequest, MAX_FRAME_RATE};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use thiserror::Error;
use tokio::sync::{broadcast, oneshot};

use neurotrack_core::synth::{make_cohort, SubjectParams, SyntheticSubject};
use neurotrack_core::task::Engine;
use neurotrack_core::SessionConfig;

use session::{Actor, Request, Timing};

/// Gaze older than this holds the cursor.
pub const DEFAULT_STALE_GAZE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{1}")]
    BadRequest(StatusCode, String),
    #[error("session stopped")]
    Gone,
    #[error(transparent)]
    Engine(#[from] neurotrack_core::Error),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadRequest(s, _) => *s,
            ApiError::Gone => StatusCode::GONE,
            ApiError::Engine(neurotrack_core::Error::InvalidConfig(_) | neurotrack_core::Error::InvalidArgument(_)) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ApiError::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::BadRequest(r.status(), r.body_text())
    }
}

/// Body of `POST /sessions`; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub config: Option<SessionConfig>,
    /// `key=value` overrides applied on top of `config`.
    pub overrides: Vec<String>,
    /// Replaces `config.rng_seed`.
    pub seed: Option<u64>,
    /// Explicit subject parameters; the default subject otherwise.
    pub subject: Option<SubjectParams>,
    /// Pick a subject out of a seeded cohort, as `simulate --subjects` does.
    pub cohort: Option<CohortPick>,
    pub step_interval_ms: Option<u64>,
    pub stale_gaze_ms: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortPick {
    pub size: usize,
    pub seed: u64,
    pub index: usize,
}

struct SessionHandle {
    tx: mpsc::Sender<Request>,
    snapshot: Arc<Mutex<SessionSnapshot>>,
    events: broadcast::Sender<String>,
}

#[derive(Default)]
pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    counter: AtomicU64,
}

impl AppState {
    fn get(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }
}

impl Drop for AppState {
    fn drop(&mut self) {
        for h in self.sessions.get_mut().expect("session table lock").values() {
            let _ = h.tx.send(Request::Shutdown);
        }
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/tasks", post(start_task))
        .route("/sessions/{id}/export/{what}", get(export))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(Arc::new(AppState::default()))
}

/// Serve until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn build_engine(req: CreateSession) -> Result<(Engine, Timing), ApiError> {
    let mut config = req.config.unwrap_or_default();
    for o in &req.overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = req.seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    let (subject, index) = match (req.subject, req.cohort) {
        (Some(_), Some(_)) => return Err(ApiError::Invalid("give either subject or cohort, not both".into())),
        (Some(p), None) => (SyntheticSubject::new(p, config.processing_rate_hz)?, 0),
        (None, Some(c)) => {
            let mut cohort = make_cohort(c.size, c.seed, &config)?;
            if c.index >= cohort.len() {
                return Err(ApiError::Invalid(format!("cohort index {} out of {}", c.index, c.size)));
            }
            (cohort.swap_remove(c.index), c.index)
        }
        (None, None) => (SyntheticSubject::default_for(&config), 0),
    };
    let step_ms = req
        .step_interval_ms
        .unwrap_or((config.step_seconds * 1000.0).round() as u64);
    if step_ms == 0 {
        return Err(ApiError::Invalid("step_interval_ms must be positive".into()));
    }
    let timing = Timing {
        step_interval: Duration::from_millis(step_ms),
        stale_after: req.stale_gaze_ms.map_or(DEFAULT_STALE_GAZE, Duration::from_millis),
    };
    Ok((Engine::new(&config, &subject)?.with_subject_index(index), timing))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let (engine, timing) = tokio::task::spawn_blocking(move || build_engine(req))
        .await
        .map_err(|_| ApiError::Gone)??;
    let id = format!("s{}", app.counter.fetch_add(1, Ordering::Relaxed) + 1);
    let (tx, rx) = mpsc::channel();
    let (events, _) = broadcast::channel(1024);
    let snapshot = Arc::new(Mutex::new(placeholder(&id, &engine)));
    let actor = Actor::new(id.clone(), engine, timing, snapshot.clone(), events.clone());
    let first = actor.snapshot();
    std::thread::Builder::new()
        .name(format!("session-{id}"))
        .spawn(move || actor.run(rx))
        .map_err(|e| ApiError::Invalid(format!("cannot start session: {e}")))?;
    app.sessions
        .lock()
        .expect("session table lock")
        .insert(id, Arc::new(SessionHandle { tx, snapshot, events }));
    Ok((StatusCode::CREATED, Json(first)).into_response())
}

fn placeholder(id: &str, engine: &Engine) -> SessionSnapshot {
    SessionSnapshot {
        session_id: id.to_string(),
        phase: Phase::Idle,
        trained: false,
        training: None,
        subject_index: engine.subject_index,
        subject: engine.subject.params.clone(),
        config: engine.config.clone(),
        n_trials: 0,
        step_index: 0,
        cursor: [0.0, 0.0],
        target: None,
        gaze: None,
        step_interval_ms: 0,
        stale_gaze_ms: 0,
        snake: None,
        last_error: None,
    }
}

async fn ask<T>(h: &SessionHandle, make: impl FnOnce(session::Reply<T>) -> Request) -> Result<T, ApiError> {
    let (tx, rx) = oneshot::channel();
    h.tx.send(make(tx)).map_err(|_| ApiError::Gone)?;
    rx.await.map_err(|_| ApiError::Gone)?
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionSnapshot>, ApiError> {
    let h = app.get(&id)?;
    let snap = h.snapshot.lock().expect("snapshot lock").clone();
    Ok(Json(snap))
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let h = app
        .sessions
        .lock()
        .expect("session table lock")
        .remove(&id)
        .ok_or(ApiError::NotFound(id))?;
    let _ = h.tx.send(Request::Shutdown);
    Ok(StatusCode::NO_CONTENT)
}

async fn train(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = app.get(&id)?;
    Ok(Json(ask(&h, Request::Train).await?).into_response())
}

async fn start_task(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<TaskRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let h = app.get(&id)?;
    let Json(req) = body?;
    Ok(Json(ask(&h, |r| Request::StartTask(req, r)).await?).into_response())
}

async fn export(State(app): State<Arc<AppState>>, Path((id, what)): Path<(String, String)>) -> Result<Response, ApiError> {
    let h = app.get(&id)?;
    let kind: ExportKind = serde_json::from_value(serde_json::Value::String(what.clone()))
        .map_err(|_| ApiError::NotFound(format!("{id} export {what}")))?;
    let out = ask(&h, |r| Request::Export(kind, r)).await?;
    Ok(([(header::CONTENT_TYPE, out.content_type)], out.body).into_response())
}

async fn stream(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let h = app.get(&id)?;
    Ok(ws.on_upgrade(move |socket| pump(socket, h)))
}

async fn pump(mut socket: WebSocket, h: Arc<SessionHandle>) {
    let mut events = h.events.subscribe();
    let hello = ServerMessage::State {
        session: h.snapshot.lock().expect("snapshot lock").clone(),
    };
    if socket.send(Message::Text(hello.to_text().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            inbound = socket.recv() => {
                let text = match inbound {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Binary(_))) => String::new(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(msg) => {
                        if h.tx.send(Request::Client(msg)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let err = ServerMessage::Error { message: format!("malformed message: {e}") };
                        if socket.send(Message::Text(err.to_text().into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
            outbound = events.recv() => match outbound {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("stream client lagged by {n} messages"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
}
