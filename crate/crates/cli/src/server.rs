//! HTTP and WebSocket front end for [`Service`].
//!
//! Catalog queries are plain JSON request/response. A session's frame stream
//! is a WebSocket carrying [`ServerMessage`]s out and [`ClientMessage`]s in;
//! the stream owns the session, so closing the socket closes the session.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use scenescope::scene::MeshUpload;
use scenescope::service::{ClientMessage, ServerMessage, Tick, PROTOCOL_VERSION};
use scenescope::{Error, Service, Session};

/// Frames waiting for a slow client. Beyond this the frame loop blocks and
/// state updates coalesce, so intermediate frames are dropped, never reordered.
const STREAM_BUFFER: usize = 2;

const UPLOAD_LIMIT: usize = 64 << 20;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Service>,
    /// Idle period after which a keepalive is sent.
    pub keepalive: Duration,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::NotFound { .. } => StatusCode::NOT_FOUND,
        Error::Context { source, .. } => status_of(source),
        Error::InvalidParam { .. }
        | Error::Mesh(_)
        | Error::Incomparable(_)
        | Error::Parse { .. }
        | Error::Codec(_)
        | Error::Shape(_) => StatusCode::BAD_REQUEST,
        Error::SessionClosed => StatusCode::GONE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"message": self.0.to_string(), "field": self.0.field()});
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState, static_dir: Option<&Path>, thumbnails: Option<&Path>) -> Router {
    let mut app = Router::new()
        .route("/api/health", get(health))
        .route("/api/models", get(list_models))
        .route("/api/models/{id}/groups", get(list_groups))
        .route("/api/meshes", get(list_meshes).post(upload_mesh))
        .route("/api/backgrounds", get(list_backgrounds))
        .route("/api/fvis", get(list_fvis))
        .route("/api/fvis/{id}", get(get_fvis))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", axum::routing::delete(close_session))
        .route("/api/sessions/{id}/messages", post(session_message))
        .route("/api/sessions/{id}/frame", get(session_frame))
        .route("/api/sessions/{id}/activations/{model}/{node}/{channel}", get(session_activation))
        .route("/api/sessions/{id}/stream", get(stream))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state);
    if let Some(dir) = thumbnails {
        app = app.nest_service("/thumbnails", ServeDir::new(dir));
    }
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"protocol_version": PROTOCOL_VERSION}))
}

async fn list_models(State(app): State<AppState>) -> impl IntoResponse {
    Json(app.service.list_models())
}

async fn list_groups(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.service.list_neuron_groups(&id)?.clone()))
}

async fn list_meshes(State(app): State<AppState>) -> impl IntoResponse {
    Json(app.service.list_meshes())
}

async fn upload_mesh(State(app): State<AppState>, Json(upload): Json<MeshUpload>) -> ApiResult<impl IntoResponse> {
    let info = app.service.upload_mesh(upload)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_backgrounds(State(app): State<AppState>) -> impl IntoResponse {
    Json(app.service.list_backgrounds())
}

async fn list_fvis(State(app): State<AppState>) -> impl IntoResponse {
    let assets: Vec<_> = app.service.fvis_assets().into_iter().cloned().collect();
    Json(assets)
}

async fn get_fvis(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let (_, bytes) = app.service.get_fvis_asset(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes))
}

#[derive(Deserialize)]
struct CreateSession {
    models: Vec<String>,
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    let session = app.service.create_session(&req.models)?;
    log::info!("session {} opened on {}", session.id(), req.models.join(", "));
    Ok((StatusCode::CREATED, Json(app.service.hello(&session))))
}

async fn close_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    app.service.close_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Rendering and attack control block, so they run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

async fn session_message(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(msg): Json<ClientMessage>,
) -> ApiResult<impl IntoResponse> {
    let session = app.service.session(&id)?;
    Ok(Json(blocking(move || session.handle(msg)).await))
}

/// The current frame without advancing the stream's sequence.
async fn session_frame(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let session = app.service.session(&id)?;
    let (payload, timings) = blocking(move || session.render_payload()).await?;
    let frame = scenescope::service::Frame {
        seq: 0,
        payload,
        timings,
    };
    Ok(Json(frame.to_packet()))
}

/// Full-precision map from the session's most recent streamed frame.
async fn session_activation(
    State(app): State<AppState>,
    UrlPath((id, model, node, channel)): UrlPath<(String, String, String, usize)>,
) -> ApiResult<impl IntoResponse> {
    let session = app.service.session(&id)?;
    Ok(Json(session.activation(&model, &node, channel)?))
}

async fn stream(ws: WebSocketUpgrade, State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let session = app.service.session(&id)?;
    Ok(ws.on_upgrade(move |socket| run_stream(socket, app, session)))
}

fn frame_loop(session: Session, keepalive: Duration, tx: mpsc::Sender<ServerMessage>) {
    loop {
        let msg = match session.poll(keepalive) {
            Ok(Tick::Frame(f)) => ServerMessage::Frame(f.to_packet()),
            Ok(Tick::Idle { seq, state_version }) => ServerMessage::Keepalive { seq, state_version },
            Ok(Tick::Closed) => {
                let _ = tx.blocking_send(ServerMessage::End);
                return;
            }
            Err(e) => {
                log::warn!("session {}: {e}", session.id());
                // the state was accepted, so a failure here is an asset or
                // model problem; wait for the next change instead of spinning
                std::thread::sleep(Duration::from_millis(50));
                ServerMessage::from_error(&e)
            }
        };
        if tx.blocking_send(msg).is_err() {
            return;
        }
    }
}

async fn run_stream(socket: WebSocket, app: AppState, session: Session) {
    let id = session.id().to_string();
    let (mut sink, mut incoming) = socket.split();
    let (tx, mut rx) = mpsc::channel(STREAM_BUFFER);
    let _ = tx.send(app.service.hello(&session)).await;

    let frames = {
        let (session, tx) = (session.clone(), tx.clone());
        tokio::task::spawn_blocking(move || frame_loop(session, app.keepalive, tx))
    };
    let reader = {
        let session = session.clone();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = incoming.next().await {
                let text = match msg {
                    Message::Text(t) => t,
                    Message::Close(_) => break,
                    _ => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(m) => {
                        let s = session.clone();
                        blocking(move || s.handle(m)).await
                    }
                    Err(e) => ServerMessage::Error {
                        message: format!("bad message: {e}"),
                        field: None,
                    },
                };
                if tx.send(reply).await.is_err() {
                    break;
                }
            }
        })
    };

    while let Some(msg) = rx.recv().await {
        let end = matches!(msg, ServerMessage::End);
        let text = serde_json::to_string(&msg).expect("server messages serialize");
        if sink.send(Message::Text(text.into())).await.is_err() || end {
            break;
        }
    }
    reader.abort();
    // wakes the frame loop if it is waiting
    session.close();
    let _ = app.service.close_session(&id);
    drop(rx);
    let _ = frames.await;
    let _ = sink.close().await;
    log::info!("session {id} stream ended");
}

pub async fn serve(state: AppState, static_dir: Option<&Path>, thumbnails: Option<&Path>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir, thumbnails))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
