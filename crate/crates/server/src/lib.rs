//! HTTP/JSON front end of the pipeline. Numerical work runs on the blocking pool;
//! loaded bundles are cached by manifest content.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use deepbnd_core::api::{self, ErrorBody, Stage};
use deepbnd_core::pipeline::{load_bundle, Bundle, BUNDLE_FILE};
use deepbnd_core::Error;
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match &self.0 {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Incompatible(_)
            | Error::Json(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Artifact(_) => StatusCode::CONFLICT,
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            Error::MeshTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> deepbnd_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError(Error::Artifact(format!("worker task failed: {e}")))),
    }
}

#[derive(Default)]
pub struct AppState {
    bundles: Mutex<HashMap<PathBuf, (String, Arc<Bundle>)>>,
}

impl AppState {
    /// Loads a bundle, reusing the cached copy while its manifest is unchanged.
    fn bundle(&self, path: &Path) -> deepbnd_core::Result<Arc<Bundle>> {
        let file = if path.is_dir() {
            path.join(BUNDLE_FILE)
        } else {
            path.to_path_buf()
        };
        let hash = hex::encode(Sha256::digest(std::fs::read(&file)?));
        if let Some((h, b)) = self.bundles.lock().expect("bundle cache").get(&file) {
            if *h == hash {
                return Ok(b.clone());
            }
        }
        let b = Arc::new(load_bundle(&file)?);
        self.bundles
            .lock()
            .expect("bundle cache")
            .insert(file, (hash, b.clone()));
        Ok(b)
    }
}

type Shared = State<Arc<AppState>>;

async fn health() -> Json<api::Health> {
    Json(api::health())
}

async fn sample(Json(req): Json<api::SampleRequest>) -> ApiResult<api::SampleResponse> {
    blocking(move || api::sample(&req)).await
}

async fn run_stage(stage: Stage, mut req: api::OfflineRequest) -> ApiResult<api::OfflineResponse> {
    req.stage = stage;
    blocking(move || api::offline(&req)).await
}

async fn snapshots(Json(req): Json<api::OfflineRequest>) -> ApiResult<api::OfflineResponse> {
    run_stage(Stage::Snapshots, req).await
}

async fn pod(Json(req): Json<api::OfflineRequest>) -> ApiResult<api::OfflineResponse> {
    run_stage(Stage::Pod, req).await
}

async fn train(Json(req): Json<api::OfflineRequest>) -> ApiResult<api::OfflineResponse> {
    run_stage(Stage::Train, req).await
}

async fn offline(Json(req): Json<api::OfflineRequest>) -> ApiResult<api::OfflineResponse> {
    run_stage(Stage::All, req).await
}

async fn predict(State(s): Shared, Json(req): Json<api::PredictRequest>) -> ApiResult<api::PredictResponse> {
    blocking(move || api::predict(&*s.bundle(&req.bundle)?, &req)).await
}

async fn tangent(State(s): Shared, Json(req): Json<api::TangentRequest>) -> ApiResult<api::TangentResponse> {
    blocking(move || {
        let b = req.bundle.as_deref().map(|p| s.bundle(p)).transpose()?;
        api::homogenised(b.as_deref(), &req)
    })
    .await
}

async fn fe2(State(s): Shared, Json(req): Json<api::Fe2Request>) -> ApiResult<api::MacroSummary> {
    blocking(move || {
        let b = req.bundle.as_deref().map(|p| s.bundle(p)).transpose()?;
        api::run_fe2(b.as_deref(), &req)
    })
    .await
}

async fn dns(Json(req): Json<api::DnsRequest>) -> ApiResult<api::MacroSummary> {
    blocking(move || api::run_dns(&req)).await
}

async fn report(
    State(s): Shared,
    Json(req): Json<api::ReportRequest>,
) -> ApiResult<deepbnd_core::pipeline::OnlineSummary> {
    blocking(move || api::report(&*s.bundle(&req.bundle)?, &req)).await
}

async fn validate(
    Json(req): Json<api::ValidateRequest>,
) -> ApiResult<deepbnd_core::pipeline::ValidationReport> {
    blocking(move || Ok(api::validate(&req))).await
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sample", post(sample))
        .route("/snapshots", post(snapshots))
        .route("/pod", post(pod))
        .route("/train", post(train))
        .route("/offline", post(offline))
        .route("/predict", post(predict))
        .route("/tangent", post(tangent))
        .route("/fe2", post(fe2))
        .route("/dns", post(dns))
        .route("/report", post(report))
        .route("/validate", post(validate))
        .with_state(Arc::new(AppState::default()))
}

/// Serves until the process is stopped.
pub async fn serve(addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router()).await
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.task
            .await
            .map_err(|e| std::io::Error::other(e.to_string()))?
    }
}

/// Binds `addr` (e.g. `127.0.0.1:0`) and serves on a background task.
pub async fn spawn(addr: &str) -> std::io::Result<RunningServer> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(async move {
        axum::serve(listener, router())
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningServer {
        addr,
        shutdown: tx,
        task,
    })
}
