use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use drape_core::deform::{parse_correspondences, CorrespondenceSet};
use drape_core::geometry::{parse_mesh, parse_target};
use drape_core::metrics::TransferReport;
use drape_core::pipeline::{DrapeConfig, DrapeSession, SessionStatus};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::error::ApiError;
use crate::frames::StreamMessage;
use crate::registry::{Registry, SessionHandle, StreamEvent};

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(registry: Arc<Registry>) -> Router {
    let limit = registry.config().max_upload_bytes;
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/correspondences", put(set_correspondences))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/result", get(result))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(registry)
}

/// Body of `POST /sessions`. Shapes are OBJ-style text; the target may also
/// be a bare `x y z` point list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub config: Option<DrapeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub iteration: usize,
    pub iterations: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    pub created: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceResponse {
    pub status: SessionStatus,
    pub iteration: usize,
    /// Pairs as stored, with targets snapped onto the target shape.
    pub pairs: CorrespondenceSet,
    /// Current vertex positions: the initial deformation for idle sessions.
    pub preview: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlAction {
    Start,
    Pause,
    Resume,
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRequest {
    pub action: ControlAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultResponse {
    pub iteration: usize,
    pub partial: bool,
    pub report: TransferReport,
    /// OBJ text in the target's original frame.
    pub mesh: String,
}

#[derive(Debug, Deserialize)]
struct ResultQuery {
    format: Option<String>,
}

fn view(h: &SessionHandle, s: &DrapeSession) -> SessionView {
    SessionView {
        id: h.id.clone(),
        status: s.status(),
        iteration: s.iteration(),
        iterations: s.config().iterations,
        vertex_count: s.source().vertex_count(),
        face_count: s.source().faces().len(),
        created: h.created,
        error: s.error().map(str::to_string),
    }
}

fn lookup(reg: &Registry, id: &str) -> ApiResult<Arc<SessionHandle>> {
    reg.get(id).ok_or_else(|| ApiError::not_found(id))
}

/// Run `f` off the async executor; session locks may wait for one iteration.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(
    State(reg): State<Arc<Registry>>,
    body: Result<Json<CreateSessionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    blocking(move || {
        let config = req.config.unwrap_or_default();
        config.validate().map_err(ApiError::from)?;
        let source = parse_mesh(&req.source).map_err(|e| ApiError::bad_request(format!("source: {e}")))?;
        let target = parse_target(&req.target, config.target.dense_samples)
            .map_err(|e| ApiError::bad_request(format!("target: {e}")))?;
        let session = DrapeSession::create(source, target, CorrespondenceSet::default(), config)?;
        let handle = reg.add(session);
        let s = handle.session.lock();
        tracing::info!(session = %handle.id, vertices = s.source().vertex_count(), "created");
        Ok((StatusCode::CREATED, Json(view(&handle, &s))))
    })
    .await
}

async fn session_status(State(reg): State<Arc<Registry>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let h = lookup(&reg, &id)?;
    blocking(move || {
        let s = h.session.lock();
        Ok(Json(view(&h, &s)))
    })
    .await
}

async fn set_correspondences(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<CorrespondenceResponse>> {
    let h = lookup(&reg, &id)?;
    blocking(move || {
        let pairs = parse_correspondences(&body)?;
        let mut s = h.session.lock();
        match s.status() {
            SessionStatus::Idle => s.reinitialize(pairs)?,
            _ => s.update_correspondences(pairs)?,
        }
        Ok(Json(CorrespondenceResponse {
            status: s.status(),
            iteration: s.iteration(),
            pairs: s.correspondences(),
            preview: s
                .current_positions()
                .map_err(ApiError::from)?
                .iter()
                .map(|p| [p.x, p.y, p.z])
                .collect(),
        }))
    })
    .await
}

async fn control(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    body: Result<Json<ControlRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let h = lookup(&reg, &id)?;
    let Json(req) = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    blocking(move || {
        let mut s = h.session.lock();
        match req.action {
            ControlAction::Start => s.start()?,
            ControlAction::Pause => s.pause()?,
            ControlAction::Resume => s.resume()?,
            ControlAction::Cancel => s.cancel()?,
        }
        match req.action {
            ControlAction::Pause => {
                if let Err(e) = reg.persist(&h, &s) {
                    tracing::warn!(session = %h.id, error = %e, "checkpoint failed");
                }
            }
            ControlAction::Cancel => h.publish_result(&s),
            _ => {}
        }
        h.notify();
        Ok(Json(view(&h, &s)))
    })
    .await
}

async fn result(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    Query(q): Query<ResultQuery>,
) -> ApiResult<Response> {
    let h = lookup(&reg, &id)?;
    let stored = blocking(move || {
        let s = h.session.lock();
        if !matches!(s.status(), SessionStatus::Done | SessionStatus::Cancelled | SessionStatus::Paused) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("session is {}; results are available once done, cancelled or paused", s.status()),
            ));
        }
        Ok(h.result(&s)?)
    })
    .await?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(ResultResponse {
            iteration: stored.result.iteration,
            partial: stored.result.partial,
            report: stored.result.report.clone(),
            mesh: stored.obj.clone(),
        })
        .into_response()),
        Some("obj") => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], stored.obj.clone()).into_response()),
        Some(other) => Err(ApiError::bad_request(format!("unknown format {other:?}; use json or obj"))),
    }
}

async fn stream(State(reg): State<Arc<Registry>>, Path(id): Path<String>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    let h = lookup(&reg, &id)?;
    // subscribe before the upgrade completes so nothing published after the
    // handshake is missed
    let (rx, terminal) = blocking(move || {
        let s = h.session.lock();
        let rx = h.events.subscribe();
        Ok((rx, h.terminal_message(&s)))
    })
    .await?;
    Ok(ws.on_upgrade(move |socket| forward(socket, rx, terminal)))
}

async fn send_event(socket: &mut WebSocket, event: &StreamEvent) -> bool {
    let text = serde_json::to_string(&event.message).expect("stream messages serialize");
    if socket.send(Message::Text(text.into())).await.is_err() {
        return false;
    }
    if let Some(bytes) = &event.vertices {
        if socket.send(Message::Binary(bytes.clone().into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<StreamEvent>>, terminal: Option<StreamMessage>) {
    if let Some(message) = terminal {
        send_event(&mut socket, &StreamEvent { message, vertices: None }).await;
        let _ = socket.send(Message::Close(None)).await;
        return;
    }
    loop {
        tokio::select! {
            event = rx.recv() => match event {
                Ok(event) => {
                    if !send_event(&mut socket, &event).await || event.is_final() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let message = StreamMessage::Error { message: format!("subscriber fell behind by {n} messages") };
                    send_event(&mut socket, &StreamEvent { message, vertices: None }).await;
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
