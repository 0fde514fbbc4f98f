//! A scripted HTTP model server speaking both wire protocols.

mod bots;
mod script;

pub use bots::{BotKind, KeywordBot};
pub use script::{AlwaysTag, Failures, MatchSpec, Script, ScriptEntry, ScriptError, ScriptSpec, TaggedMatch};

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

/// What the server sends back for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub body: Result<String, (u16, String)>,
    pub delay: Duration,
}

impl Reply {
    pub fn text(text: impl Into<String>) -> Self {
        Reply { body: Ok(text.into()), delay: Duration::ZERO }
    }

    pub fn fail(status: u16, message: impl Into<String>) -> Self {
        Reply { body: Err((status, message.into())), delay: Duration::ZERO }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// Maps a user message to a reply.
pub trait Behavior: Send + Sync {
    fn respond(&self, user_message: &str) -> Reply;
}

impl<F> Behavior for F
where
    F: Fn(&str) -> Reply + Send + Sync,
{
    fn respond(&self, user_message: &str) -> Reply {
        self(user_message)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoggedRequest {
    pub seq: u64,
    pub path: String,
    pub system_prompt: Option<String>,
    pub user_message: String,
    pub body: Value,
    pub authorization: Option<String>,
    /// Offset from server start.
    pub started: Duration,
    pub finished: Duration,
    pub status: u16,
}

struct ServerState {
    behavior: Box<dyn Behavior>,
    epoch: Instant,
    seq: AtomicU64,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    log: Mutex<Vec<LoggedRequest>>,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<ServerState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds 127.0.0.1:`port` (0 picks a free port) and starts serving.
    pub async fn start(behavior: impl Behavior + 'static, port: u16) -> std::io::Result<MockServer> {
        MockServer::start_on(behavior, SocketAddr::from(([127, 0, 0, 1], port))).await
    }

    pub async fn start_on(behavior: impl Behavior + 'static, addr: SocketAddr) -> std::io::Result<MockServer> {
        let state = Arc::new(ServerState {
            behavior: Box::new(behavior),
            epoch: Instant::now(),
            seq: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat_completions))
            .route("/generate", post(generate))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app).with_graceful_shutdown(async {
                rx.await.ok();
            });
            if let Err(e) = served.await {
                tracing::error!(error = %e, "mock server stopped");
            }
        });
        Ok(MockServer { addr, state, shutdown: Some(tx), task: Some(task) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far.
    pub fn hits(&self) -> u64 {
        self.state.seq.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    /// Completed requests in completion order.
    pub fn log(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().expect("log poisoned").clone()
    }

    pub async fn shutdown(mut self) {
        self.stop().await;
    }

    async fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Serves until the task is cancelled or the process receives Ctrl-C.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.as_mut() {
            tokio::select! {
                _ = task => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        }
        self.stop().await;
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Splits a raw-generate prompt built with a system prompt back into parts.
fn split_generate_inputs(inputs: &str) -> (Option<String>, String) {
    if let Some(body) = inputs.strip_suffix("\nAssistant:") {
        if let Some(at) = body.find("\nUser: ") {
            return (Some(body[..at].to_string()), body[at + "\nUser: ".len()..].to_string());
        }
    }
    (None, inputs.to_string())
}

struct Incoming {
    path: &'static str,
    system: Option<String>,
    user: String,
    body: Value,
    authorization: Option<String>,
}

fn authorization(headers: &HeaderMap) -> Option<String> {
    headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string)
}

async fn serve_one(state: Arc<ServerState>, req: Incoming) -> Result<String, Response> {
    let seq = state.seq.fetch_add(1, Ordering::SeqCst);
    let started = state.epoch.elapsed();
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let reply = state.behavior.respond(&req.user);
    if !reply.delay.is_zero() {
        tokio::time::sleep(reply.delay).await;
    }
    let status = match &reply.body {
        Ok(_) => 200,
        Err((code, _)) => *code,
    };
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    let finished = state.epoch.elapsed();
    state.log.lock().expect("log poisoned").push(LoggedRequest {
        seq,
        path: req.path.to_string(),
        system_prompt: req.system,
        user_message: req.user,
        body: req.body,
        authorization: req.authorization,
        started,
        finished,
        status,
    });
    reply.body.map_err(|(code, message)| {
        let code = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (code, Json(json!({"error": message}))).into_response()
    })
}

async fn chat_completions(State(state): State<Arc<ServerState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let messages = body.get("messages").and_then(Value::as_array).cloned().unwrap_or_default();
    let content_of = |role: &str| {
        messages
            .iter()
            .rev()
            .find(|m| m.get("role").and_then(Value::as_str) == Some(role))
            .and_then(|m| m.get("content").and_then(Value::as_str))
            .map(str::to_string)
    };
    let Some(user) = content_of("user") else {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "no user message"}))).into_response();
    };
    let system = content_of("system");
    let model = body.get("model").cloned().unwrap_or(Value::Null);
    let req = Incoming { path: "/v1/chat/completions", system, user, body, authorization: authorization(&headers) };
    match serve_one(state, req).await {
        Ok(text) => Json(json!({
            "object": "chat.completion",
            "model": model,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        }))
        .into_response(),
        Err(resp) => resp,
    }
}

async fn generate(State(state): State<Arc<ServerState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let Some(inputs) = body.get("inputs").and_then(Value::as_str) else {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "missing inputs"}))).into_response();
    };
    let (system, user) = split_generate_inputs(inputs);
    let req = Incoming { path: "/generate", system, user, body, authorization: authorization(&headers) };
    match serve_one(state, req).await {
        Ok(text) => Json(json!({"generated_text": text})).into_response(),
        Err(resp) => resp,
    }
}
