//! HTTP gate service.
//!
//! The bundle is loaded once at startup and shared read-only; handlers hold
//! no other state, so a response depends only on the bundle and the body.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use uar_core::gate::{GateBundle, GateError, GateInput, Policy, PolicyKind, TreeConfig};
use uar_core::rag::{ExtractorClient, HttpExtractor};

use crate::config::ServiceConfig;
use crate::error::{CliError, CliResult};

pub struct AppState {
    pub bundle: GateBundle,
    pub tree: TreeConfig,
    pub default_policy: PolicyKind,
    pub model_tag: String,
    pub extractor: Option<HttpExtractor>,
}

impl AppState {
    /// Loads and checks the bundle named by the config.
    pub fn from_config(cfg: &ServiceConfig) -> CliResult<Self> {
        let bundle = GateBundle::load_dir(&cfg.bundle).map_err(CliError::from)?;
        Ok(AppState {
            bundle,
            tree: TreeConfig::default(),
            default_policy: cfg.policy,
            model_tag: cfg.model_tag.clone(),
            extractor: cfg.extractor_url.as_deref().map(HttpExtractor::new),
        })
    }

    pub fn new(bundle: GateBundle, model_tag: impl Into<String>) -> Self {
        AppState {
            bundle,
            tree: TreeConfig::default(),
            default_policy: PolicyKind::UarTree,
            model_tag: model_tag.into(),
            extractor: None,
        }
    }

    /// The decision JSON for `vector` under the named (or default) policy.
    pub fn decide(&self, vector: &[f32], policy: Option<&str>) -> Result<String, ApiError> {
        let kind = match policy {
            Some(p) => p
                .parse::<PolicyKind>()
                .map_err(|e| ApiError::bad_request("unknown_policy", e.to_string()))?,
            None => self.default_policy,
        };
        let policy = Policy::from_kind(kind, &self.bundle, &self.tree)
            .map_err(|e| ApiError::bad_request("unsupported_policy", e.to_string()))?;
        if matches!(policy, Policy::UarTree { .. } | Policy::Single(_)) && vector.len() != self.bundle.dim() {
            return Err(ApiError::bad_request(
                "dimension_mismatch",
                format!("vector has {} values, bundle dim is {}", vector.len(), self.bundle.dim()),
            ));
        }
        match policy.decide(GateInput::Vector(vector)) {
            Ok(d) => Ok(d.to_json()),
            Err(GateError::DimensionMismatch { expected, found }) => Err(ApiError::bad_request(
                "dimension_mismatch",
                format!("vector has {found} values, bundle dim is {expected}"),
            )),
            Err(GateError::NonFiniteValue(i)) => Err(ApiError::bad_request(
                "non_finite_value",
                format!("vector value at index {i} is not finite"),
            )),
            Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"code": self.code, "message": self.message}}).to_string();
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn json_ok(body: String) -> Response {
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn body_or_error(body: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    body.map_err(|r| {
        let status = r.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "malformed_request"
        };
        ApiError::new(status, code, r.body_text())
    })
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_request", e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecideRequest {
    vector: Vec<f32>,
    #[serde(default)]
    policy: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecideTextRequest {
    text: String,
    #[serde(default)]
    policy: Option<String>,
}

async fn decide(State(st): State<Arc<AppState>>, body: Result<Bytes, BytesRejection>) -> Response {
    let run = || -> Result<String, ApiError> {
        let body = body_or_error(body)?;
        let req: DecideRequest = parse(&body)?;
        st.decide(&req.vector, req.policy.as_deref())
    };
    match run() {
        Ok(b) => json_ok(b),
        Err(e) => e.into_response(),
    }
}

async fn decide_text(State(st): State<Arc<AppState>>, body: Result<Bytes, BytesRejection>) -> Response {
    let req: DecideTextRequest = match body_or_error(body).and_then(|b| parse(&b)) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let Some(extractor) = st.extractor.clone() else {
        return ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "extractor_unavailable",
            "no extractor endpoint is configured",
        )
        .into_response();
    };
    let text = req.text;
    let extracted = tokio::task::spawn_blocking(move || extractor.extract(&text)).await;
    let vector = match extracted {
        Ok(Ok(e)) => e.vector,
        Ok(Err(e)) => return ApiError::new(StatusCode::BAD_GATEWAY, "extractor_failed", e.to_string()).into_response(),
        Err(e) => return ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()).into_response(),
    };
    match st.decide(&vector, req.policy.as_deref()) {
        Ok(b) => json_ok(b),
        Err(e) => e.into_response(),
    }
}

async fn health(State(st): State<Arc<AppState>>) -> Response {
    json_ok(serde_json::json!({"status": "ok", "dim": st.bundle.dim(), "model_tag": st.model_tag}).to_string())
}

async fn log_request(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let resp = next.run(req).await;
    tracing::info!(
        method,
        path,
        status = resp.status().as_u16(),
        latency_us = start.elapsed().as_micros() as u64,
        "request"
    );
    resp
}

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/decide", post(decide))
        .route("/v1/decide_text", post(decide_text))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

/// A service running on its own runtime thread; stops when dropped.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `bind` and serves in the background.
pub fn spawn(state: AppState, bind: &str, max_body_bytes: usize) -> std::io::Result<RunningService> {
    let std_listener = std::net::TcpListener::bind(bind)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(Arc::new(state), max_body_bytes);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves until interrupted.
pub fn serve_forever(state: AppState, cfg: &ServiceConfig) -> CliResult<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::config(format!("cannot start runtime: {e}")))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.bind)
            .await
            .map_err(|e| CliError::config(format!("cannot bind {}: {e}", cfg.bind)))?;
        let addr = listener.local_addr().map_err(|e| CliError::config(e.to_string()))?;
        tracing::info!(addr = %addr, dim = state.bundle.dim(), model_tag = %state.model_tag, "listening");
        axum::serve(listener, router(Arc::new(state), cfg.max_body_bytes))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::config(format!("server failed: {e}")))
    })
}
