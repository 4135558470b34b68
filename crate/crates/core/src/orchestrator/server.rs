use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::human::{HumanError, HumanRequest, HumanResponder};
use super::{FinalStatus, RunRecord};
use crate::llm::Conversation;
use crate::validate::Stage;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} already has feedback")]
    SessionAlreadyResolved(String),
    #[error("feedback text must not be empty")]
    EmptyFeedback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub task_id: String,
    pub failing_stage: Stage,
    pub attempt: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionDetail {
    pub id: String,
    pub task_id: String,
    pub failing_stage: Stage,
    pub attempt: u32,
    pub resolved: bool,
    pub violations: Vec<String>,
    pub conversation: Conversation,
    pub current_template: String,
    pub reference_template: Option<String>,
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub task_id: String,
    pub model_name: String,
    pub final_status: FinalStatus,
    pub success_iteration: Option<u32>,
    pub iterations: usize,
}

struct Session {
    request: HumanRequest,
    feedback: Option<String>,
}

#[derive(Default)]
struct BoardState {
    sessions: BTreeMap<u64, Session>,
    next_session: u64,
    runs: Vec<RunRecord>,
    closed: bool,
}

/// Shared state behind the session API: sessions awaiting human feedback
/// and completed runs. Runs block in [`HumanResponder::request`] until an
/// operator submits feedback.
#[derive(Default)]
pub struct SessionBoard {
    state: Mutex<BoardState>,
    changed: Condvar,
}

fn session_id(n: u64) -> String {
    format!("s{n}")
}

fn parse_session_id(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

fn run_id(index: usize) -> String {
    format!("r{}", index + 1)
}

impl SessionBoard {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, BoardState> {
        self.state.lock().expect("session board poisoned")
    }

    pub fn list_pending(&self) -> Vec<SessionSummary> {
        self.lock()
            .sessions
            .iter()
            .filter(|(_, s)| s.feedback.is_none())
            .map(|(n, s)| SessionSummary {
                id: session_id(*n),
                task_id: s.request.task_id.clone(),
                failing_stage: s.request.stage,
                attempt: s.request.attempt,
            })
            .collect()
    }

    pub fn get_session(&self, id: &str) -> Result<SessionDetail, SessionError> {
        let state = self.lock();
        let s = parse_session_id(id)
            .and_then(|n| state.sessions.get(&n))
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        Ok(SessionDetail {
            id: id.to_string(),
            task_id: s.request.task_id.clone(),
            failing_stage: s.request.stage,
            attempt: s.request.attempt,
            resolved: s.feedback.is_some(),
            violations: s.request.violations.clone(),
            conversation: s.request.conversation.clone(),
            current_template: s.request.current_template.clone(),
            reference_template: s.request.reference_template.clone(),
            feedback: s.feedback.clone(),
        })
    }

    pub fn submit_feedback(&self, id: &str, text: &str) -> Result<(), SessionError> {
        let mut state = self.lock();
        let s = parse_session_id(id)
            .and_then(|n| state.sessions.get_mut(&n))
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        if s.feedback.is_some() {
            return Err(SessionError::SessionAlreadyResolved(id.to_string()));
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyFeedback);
        }
        s.feedback = Some(text.to_string());
        self.changed.notify_all();
        Ok(())
    }

    pub fn record_run(&self, record: RunRecord) -> String {
        let mut state = self.lock();
        state.runs.push(record);
        run_id(state.runs.len() - 1)
    }

    pub fn runs(&self) -> Vec<RunSummary> {
        self.lock()
            .runs
            .iter()
            .enumerate()
            .map(|(i, r)| RunSummary {
                id: run_id(i),
                task_id: r.task_id.clone(),
                model_name: r.model_name.clone(),
                final_status: r.final_status,
                success_iteration: r.success_iteration,
                iterations: r.iterations.len(),
            })
            .collect()
    }

    pub fn run(&self, id: &str) -> Option<RunRecord> {
        let index: usize = id.strip_prefix('r')?.parse().ok()?;
        self.lock().runs.get(index.checked_sub(1)?).cloned()
    }

    /// Wakes every blocked request with [`HumanError::Closed`].
    pub fn close(&self) {
        self.lock().closed = true;
        self.changed.notify_all();
    }

    /// Blocks until at least `count` sessions exist (pending or resolved).
    pub fn wait_for_sessions(&self, count: usize) {
        let mut state = self.lock();
        while state.sessions.len() < count && !state.closed {
            state = self.changed.wait(state).expect("session board poisoned");
        }
    }
}

impl HumanResponder for SessionBoard {
    fn request(&self, request: HumanRequest) -> Result<String, HumanError> {
        let mut state = self.lock();
        if state.closed {
            return Err(HumanError::Closed);
        }
        state.next_session += 1;
        let n = state.next_session;
        tracing::info!(session = %session_id(n), task = %request.task_id, "awaiting human feedback");
        state.sessions.insert(n, Session { request, feedback: None });
        self.changed.notify_all();
        loop {
            if let Some(text) = state.sessions.get(&n).and_then(|s| s.feedback.clone()) {
                return Ok(text);
            }
            if state.closed {
                return Err(HumanError::Closed);
            }
            state = self.changed.wait(state).expect("session board poisoned");
        }
    }
}

#[derive(Deserialize)]
struct FeedbackBody {
    text: String,
}

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let status = match self {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::SessionAlreadyResolved(_) => StatusCode::CONFLICT,
            SessionError::EmptyFeedback => StatusCode::BAD_REQUEST,
        };
        error_response(status, self.to_string())
    }
}

async fn list_sessions(State(board): State<Arc<SessionBoard>>) -> Json<Vec<SessionSummary>> {
    Json(board.list_pending())
}

async fn show_session(State(board): State<Arc<SessionBoard>>, Path(id): Path<String>) -> Result<Json<SessionDetail>, SessionError> {
    board.get_session(&id).map(Json)
}

async fn submit(
    State(board): State<Arc<SessionBoard>>,
    Path(id): Path<String>,
    Json(body): Json<FeedbackBody>,
) -> Result<Json<serde_json::Value>, SessionError> {
    board.submit_feedback(&id, &body.text)?;
    Ok(Json(json!({ "id": id, "resolved": true })))
}

async fn list_runs(State(board): State<Arc<SessionBoard>>) -> Json<Vec<RunSummary>> {
    Json(board.runs())
}

async fn show_run(State(board): State<Arc<SessionBoard>>, Path(id): Path<String>) -> Response {
    match board.run(&id) {
        Some(r) => Json(r).into_response(),
        None => error_response(StatusCode::NOT_FOUND, format!("unknown run {id}")),
    }
}

pub fn router(board: Arc<SessionBoard>) -> Router {
    Router::new()
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}", get(show_session))
        .route("/sessions/{id}/feedback", post(submit))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(show_run))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(board)
}

/// A session API server running on its own thread.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server thread exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

pub fn spawn_server(board: Arc<SessionBoard>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("session-api".into())
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!(error = %e, "session API listener failed");
                        return;
                    }
                };
                let served = axum::serve(listener, router(board)).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = served.await {
                    tracing::error!(error = %e, "session API stopped");
                }
            })
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
