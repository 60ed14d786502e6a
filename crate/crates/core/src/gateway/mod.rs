//! HTTP service exposing a single loaded model.
//!
//! Routes:
//!
//! | route                        | body                              |
//! |------------------------------|-----------------------------------|
//! | `GET /health`                | `{status, stage}`                 |
//! | `GET /api/get_config`        | the model config document         |
//! | `GET /api/get_legal`         | license block                     |
//! | `GET /api/get_model_files`   | zip of the template               |
//! | `GET /api/get_samples`       | sample URLs                       |
//! | `GET /api/predict_sample`    | envelope for sample `index`       |
//! | `GET /api/predict?fileurl=`  | envelope for a fetched input      |
//! | `POST /api/predict`          | envelope for a multipart upload   |
//! | `GET /samples/{name}`        | sample bytes                      |
//! | `GET /artifacts/{digest}.mhaf` | stored artifact                 |
//!
//! [`registry_router`] serves the read-only `/registry/*` view separately.

mod envelope;
mod facade;
mod fetch;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use envelope::{inline_value, Envelope, EnvelopeOutput, ErrorBody, ModelRef};
pub use facade::{registry_router, REGISTRY_ROUTE};
pub use fetch::{is_private, parse_fetch_url, FetchError, FetchPolicy};

use crate::artifact::ArtifactStore;
use crate::engine::stubs::resolve_backend;
use crate::engine::{run_pipeline, EngineError, InferenceOutcome, InputChain, InputSource, ModelBackend};
use crate::template::{package_zip, Template};

pub const PORT_ENV: &str = "GATEWAY_PORT";
/// Port the gateway listens on inside a container.
pub const CONTAINER_PORT: u16 = 80;
pub const DEFAULT_UPLOAD_CAP: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub upload_cap: usize,
    pub fetch_policy: FetchPolicy,
    pub artifact_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            upload_cap: DEFAULT_UPLOAD_CAP,
            fetch_policy: FetchPolicy::default(),
            artifact_dir: std::env::temp_dir().join("hubforge-artifacts"),
            data_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthStatus {
    Starting,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: HealthStatus,
    pub stage: String,
}

/// Shared state of a serving gateway.
pub struct GatewayState {
    template: Template,
    chain: InputChain,
    health: RwLock<Health>,
    backend: Mutex<Option<Box<dyn ModelBackend>>>,
    store: ArtifactStore,
    options: GatewayOptions,
    client: reqwest::Client,
}

impl GatewayState {
    pub fn new(template: Template, options: GatewayOptions) -> Arc<Self> {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client builds");
        Arc::new(Self {
            template,
            chain: InputChain::standard(),
            health: RwLock::new(Health { status: HealthStatus::Starting, stage: "created".into() }),
            backend: Mutex::new(None),
            store: ArtifactStore::new(options.artifact_dir.clone()),
            options,
            client,
        })
    }

    pub fn health(&self) -> Health {
        self.health.read().expect("health lock").clone()
    }

    fn set_health(&self, status: HealthStatus, stage: impl Into<String>) {
        let stage = stage.into();
        match status {
            HealthStatus::Failed => log::warn!("model {} failed to load: {stage}", self.template.config.id),
            _ => log::info!("model {}: {stage}", self.template.config.id),
        }
        *self.health.write().expect("health lock") = Health { status, stage };
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    /// Resolves, initializes, and loads the backend. Blocking.
    pub fn load(&self) {
        let cfg = &self.template.config;
        self.set_health(HealthStatus::Starting, "initialize");
        let mut backend = match resolve_backend(&self.template.backend) {
            Ok(b) => b,
            Err(e) => return self.set_health(HealthStatus::Failed, format!("resolve: {e}")),
        };
        if let Err(e) = backend.initialize(cfg) {
            return self.set_health(HealthStatus::Failed, format!("initialize: {e}"));
        }
        self.set_health(HealthStatus::Starting, "load_weights");
        if let Err(e) = backend.load_weights(&self.template.weights_path()) {
            return self.set_health(HealthStatus::Failed, format!("load_weights: {e}"));
        }
        *self.backend.lock().expect("backend lock") = Some(backend);
        self.set_health(HealthStatus::Ready, "serving");
    }

    fn ensure_ready(&self) -> Result<(), ApiError> {
        let health = self.health();
        match health.status {
            HealthStatus::Ready => Ok(()),
            _ => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not_ready", format!("model is not ready ({})", health.stage))),
        }
    }

    fn run(&self, source: InputSource<'_>) -> Result<InferenceOutcome, EngineError> {
        let guard = self.backend.lock().expect("backend lock");
        let backend = guard.as_deref().expect("ready implies loaded");
        run_pipeline(backend, &self.chain, source, &self.template.config)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: code.into(), message: message.into(), details: None } }
    }

    fn details(mut self, details: Value) -> Self {
        self.body.details = Some(details);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        let stage = err.stage().map(|s| s.as_str());
        match &err {
            EngineError::UnsupportedFormat { allowed, .. } => {
                let accepted = allowed.clone();
                ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, err.code(), err.to_string())
                    .details(json!({ "accepted_formats": accepted, "stage": stage }))
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, err.code(), err.to_string())
                .details(json!({ "stage": stage })),
        }
    }
}

impl From<FetchError> for ApiError {
    fn from(err: FetchError) -> Self {
        let (status, code) = match err {
            FetchError::BadUrl(_) => (StatusCode::BAD_REQUEST, "bad_input"),
            FetchError::Denied(_) => (StatusCode::FORBIDDEN, "fetch_denied"),
            FetchError::Failed(_) => (StatusCode::BAD_GATEWAY, "fetch_failed"),
            FetchError::TooLarge(_) => (StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large"),
        };
        ApiError::new(status, code, err.to_string())
    }
}

type Shared = Arc<GatewayState>;

pub fn router(state: Shared) -> Router {
    let cap = state.options.upload_cap;
    Router::new()
        .route("/health", get(health))
        .route("/api/get_config", get(get_config))
        .route("/api/get_legal", get(get_legal))
        .route("/api/get_model_files", get(get_model_files))
        .route("/api/get_samples", get(get_samples))
        .route("/api/predict_sample", get(predict_sample))
        .route("/api/predict", get(predict_url).post(predict_upload))
        .route("/samples/{name}", get(sample_file))
        .route("/artifacts/{file}", get(artifact_file))
        .layer(DefaultBodyLimit::max(cap.saturating_add(64 * 1024)))
        .with_state(state)
}

fn base_url(headers: &HeaderMap) -> String {
    let host = headers.get(header::HOST).and_then(|h| h.to_str().ok()).unwrap_or("localhost");
    format!("http://{host}")
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(state.health())
}

async fn get_config(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    state.ensure_ready()?;
    Ok(Json(state.template.config.to_value()))
}

async fn get_legal(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    state.ensure_ready()?;
    let legal = &state.template.config.legal;
    let mut body = json!({ "model_license": legal.model_license });
    if !state.template.samples.is_empty() {
        if let Some(sample) = &legal.sample_data_license {
            body["sample_data_license"] = Value::from(sample.clone());
        }
    }
    Ok(Json(body))
}

async fn get_model_files(State(state): State<Shared>) -> Result<Response, ApiError> {
    state.ensure_ready()?;
    let root = state.template.root.clone();
    let zip = tokio::task::spawn_blocking(move || package_zip(&root))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "packaging_failed", e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "packaging_failed", e.to_string()))?;
    let disposition = format!("attachment; filename=\"{}.zip\"", state.template.config.id);
    Ok(([(header::CONTENT_TYPE, "application/zip".to_string()), (header::CONTENT_DISPOSITION, disposition)], zip)
        .into_response())
}

async fn get_samples(State(state): State<Shared>, headers: HeaderMap) -> Result<Json<Vec<String>>, ApiError> {
    state.ensure_ready()?;
    let base = base_url(&headers);
    Ok(Json(state.template.sample_names().iter().map(|n| format!("{base}/samples/{n}")).collect()))
}

fn content_type_for(name: &str) -> &'static str {
    match crate::engine::format_from_locator(name).as_deref() {
        Some("png") => "image/png",
        Some("jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn sample_file(State(state): State<Shared>, UrlPath(name): UrlPath<String>) -> Result<Response, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "no_such_sample", format!("no sample named `{name}`"));
    let path = state.template.sample_path(&name).ok_or_else(not_found)?.to_path_buf();
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, content_type_for(&name))], bytes).into_response())
}

async fn artifact_file(State(state): State<Shared>, UrlPath(file): UrlPath<String>) -> Result<Response, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "no_such_artifact", format!("no artifact `{file}`"));
    let path = state.store.lookup(&file).ok_or_else(not_found)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct SampleQuery {
    index: Option<String>,
}

enum Owned {
    Path(PathBuf),
    Bytes { name: String, bytes: Vec<u8> },
}

async fn infer(state: Shared, input: Owned, base: String) -> Result<Json<Envelope>, ApiError> {
    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let source = match &input {
            Owned::Path(p) => InputSource::Locator(p.to_str().unwrap_or_default()),
            Owned::Bytes { name, bytes } => InputSource::Bytes { name, bytes: bytes.clone() },
        };
        worker.run(source)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let cfg = &state.template.config;
    let output_name = cfg.serving_output().map(|d| d.name.clone()).unwrap_or_default();
    let output_type = outcome.output.output_type();
    let processing_ms = outcome.processing_ms;
    let output = match inline_value(&outcome.output) {
        Some(value) => EnvelopeOutput {
            output_type,
            name: output_name,
            value: Some(value),
            artifact_url: None,
            file_digest: None,
        },
        None => {
            let store = state.store.clone();
            let r = tokio::task::spawn_blocking(move || store.write_artifact(&outcome))
                .await
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string()))?;
            envelope::artifact_output(output_type, output_name, &base, r)
        }
    };
    Ok(Json(Envelope {
        model: ModelRef { id: cfg.id.clone(), name: cfg.meta.name.clone() },
        output,
        processing_ms,
        timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
    }))
}

async fn predict_sample(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<SampleQuery>,
) -> Result<Json<Envelope>, ApiError> {
    state.ensure_ready()?;
    let index: usize = match q.index.as_deref() {
        None | Some("") => 0,
        Some(raw) => raw
            .parse()
            .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_input", format!("index `{raw}` is not a non-negative integer")))?,
    };
    let samples = &state.template.samples;
    let path = samples.get(index).cloned().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "no_such_sample", format!("sample index {index} out of range ({} samples)", samples.len()))
    })?;
    infer(state.clone(), Owned::Path(path), base_url(&headers)).await
}

#[derive(Debug, Deserialize)]
struct PredictQuery {
    fileurl: Option<String>,
}

async fn predict_url(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<PredictQuery>,
) -> Result<Json<Envelope>, ApiError> {
    state.ensure_ready()?;
    let raw = q
        .fileurl
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_input", "missing `fileurl` query parameter"))?;
    let url = parse_fetch_url(&raw)?;
    let bytes = fetch::fetch(&state.client, &state.options.fetch_policy, &url, state.options.upload_cap).await?;
    let name = url.path_segments().and_then(|mut s| s.next_back()).unwrap_or_default().to_string();
    infer(state.clone(), Owned::Bytes { name, bytes }, base_url(&headers)).await
}

async fn predict_upload(
    State(state): State<Shared>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> Result<Json<Envelope>, ApiError> {
    state.ensure_ready()?;
    let cap = state.options.upload_cap;
    let multipart_err = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", format!("upload exceeds {cap} bytes"))
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_input", e.body_text())
        }
    };
    let mut file: Option<(String, Vec<u8>)> = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_err)? {
        let Some(name) = field.file_name().map(str::to_string) else {
            continue;
        };
        if file.is_some() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_input", "expected exactly one file part"));
        }
        let bytes = field.bytes().await.map_err(multipart_err)?;
        if bytes.len() > cap {
            return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", format!("upload exceeds {cap} bytes")));
        }
        file = Some((name, bytes.to_vec()));
    }
    let (name, bytes) =
        file.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_input", "request carries no file part"))?;
    infer(state.clone(), Owned::Bytes { name, bytes }, base_url(&headers)).await
}

/// Binds `addr`, loads the backend in the background, and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_listener(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    state: Shared,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let loader = state.clone();
    tokio::task::spawn_blocking(move || loader.load());
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A gateway running on a background thread, bound to an ephemeral local port.
pub struct RunningGateway {
    pub addr: SocketAddr,
    pub state: Shared,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl RunningGateway {
    pub fn spawn(template: Template, options: GatewayOptions) -> std::io::Result<Self> {
        let state = GatewayState::new(template, options);
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let served = state.clone();
        let thread = thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().worker_threads(2).build().expect("runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = serve_listener(listener, served, async {
                    let _ = rx.await;
                })
                .await;
            });
        });
        Ok(Self { addr, state, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the backend finished loading, successfully or not.
    pub fn wait_loaded(&self, timeout: Duration) -> Health {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let h = self.state.health();
            if h.status != HealthStatus::Starting || std::time::Instant::now() > deadline {
                return h;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for RunningGateway {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
