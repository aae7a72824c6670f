//! HTTP front end for figforge jobs.
//!
//! Jobs live as directories under one root. Each holds the pipeline
//! artifacts plus `state.json`; ratings go to a shared append-only
//! `feedback.ndjson` in the root.

pub mod job;

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use figforge_core::codec::{decode_png_rgb, unb64};
use figforge_core::image::RgbImage;
use figforge_core::feedback::{aggregate_feedback, append_feedback, read_feedback, AppendError, FeedbackRecord, FEEDBACK_FILE};
use figforge_core::pipeline::store::{write_atomic, JobMode, LOCK_FILE};
use figforge_core::pipeline::StageObserver;
use figforge_core::svg::parse_svg;
use figforge_core::{
    load_manifest, run_pipeline, vectorize_existing, verify_editable_figure, PipelineConfig, Provenance, RasterDraft,
    SourceText, StyleReference, VerifyMode,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use job::{JobState, JobTable};

pub const EDITED_FILE: &str = "edited.svg";
const FINAL_FILE: &str = "final.svg";
const MAX_BODY: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    /// Require a rating before `final.svg` can be downloaded.
    pub gate_download: bool,
    /// Editor build served under `/app`.
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origins; empty allows any.
    pub cors_origins: Vec<String>,
    /// Template for every job; `output_dir` is replaced per job.
    pub pipeline: PipelineConfig,
    pub workers: usize,
}

#[derive(Clone)]
pub struct AppState {
    cfg: Arc<ServiceConfig>,
    jobs: JobTable,
    workers: Arc<Semaphore>,
    feedback: Arc<tokio::sync::Mutex<()>>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> std::io::Result<Self> {
        let jobs = JobTable::open(&cfg.root)?;
        let workers = Arc::new(Semaphore::new(cfg.workers.max(1)));
        Ok(Self { cfg: Arc::new(cfg), jobs, workers, feedback: Arc::new(tokio::sync::Mutex::new(())) })
    }

    pub fn jobs(&self) -> &JobTable {
        &self.jobs
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": code, "message": message.into() }))).into_response()
}

fn not_found(what: &str) -> Response {
    error(StatusCode::NOT_FOUND, "not_found", format!("no such {what}"))
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE]);
    let cors = if state.cfg.cors_origins.is_empty() {
        cors.allow_origin(AllowOrigin::any())
    } else {
        let origins: Vec<HeaderValue> = state.cfg.cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        cors.allow_origin(origins)
    };
    let app: Router<AppState> = match &state.cfg.static_dir {
        Some(dir) => Router::new().nest_service("/app", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => Router::new().route("/app", get(no_editor)).route("/app/", get(no_editor)),
    };
    Router::new()
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/artifacts/{*name}", get(get_artifact))
        .route("/jobs/{id}/svg", get(get_svg).put(put_svg))
        .route("/jobs/{id}/feedback", post(submit_feedback))
        .route("/metrics/feedback", get(feedback_metrics))
        .merge(app)
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(cfg)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn no_editor() -> Html<&'static str> {
    Html("<!doctype html><title>figforge</title><p>No editor build configured. Start the service with a static directory to serve it here.</p>")
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeField {
    Generate,
    Vectorize,
}

#[derive(Debug, Deserialize)]
struct CreateJob {
    #[serde(default)]
    text: Option<String>,
    /// Base64 PNG style reference.
    #[serde(default)]
    style: Option<String>,
    /// Base64 PNG to vectorize.
    #[serde(default)]
    image: Option<String>,
    mode: Option<ModeField>,
    #[serde(default)]
    seed: Option<u64>,
}

enum Input {
    Generate(SourceText, Option<StyleReference>),
    Vectorize(RasterDraft),
}

fn decode_png_field(field: &str, data: &str) -> Result<RgbImage, String> {
    let bytes = unb64(data.trim()).map_err(|e| format!("{field} is not base64: {e}"))?;
    decode_png_rgb(&bytes).map_err(|e| format!("{field} is not a PNG: {e}"))
}

fn parse_create(body: &[u8]) -> Result<(Input, Option<u64>), String> {
    let req: CreateJob = serde_json::from_slice(body).map_err(|e| format!("bad request body: {e}"))?;
    let input = match req.mode.unwrap_or(ModeField::Generate) {
        ModeField::Generate => {
            let text = SourceText::new(req.text.unwrap_or_default());
            text.for_generation().map_err(|_| "text is empty".to_string())?;
            let style = match req.style.as_deref() {
                Some(s) => Some(StyleReference::new(decode_png_field("style", s)?).map_err(|e| e.to_string())?),
                None => None,
            };
            Input::Generate(text, style)
        }
        ModeField::Vectorize => {
            let data = req.image.as_deref().ok_or("vectorize needs an image")?;
            let px = decode_png_field("image", data)?;
            Input::Vectorize(
                RasterDraft::new(px, Provenance { backend: "upload".into(), seed: None }).map_err(|e| e.to_string())?,
            )
        }
    };
    Ok((input, req.seed))
}

async fn create_job(State(st): State<AppState>, body: Bytes) -> Response {
    let (input, seed) = match parse_create(&body) {
        Ok(v) => v,
        Err(msg) => return error(StatusCode::BAD_REQUEST, "bad_request", msg),
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = st.jobs.dir(&id);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string());
    }
    let mode = match input {
        Input::Generate(..) => JobMode::Generate,
        Input::Vectorize(_) => JobMode::Vectorize,
    };
    let job = st.jobs.insert(id.clone(), mode);
    tokio::spawn(run_job(st.clone(), id.clone(), input, seed));
    (StatusCode::ACCEPTED, Json(json!({ "job_id": id, "job": job }))).into_response()
}

async fn run_job(st: AppState, id: String, input: Input, seed: Option<u64>) {
    let Ok(_permit) = st.workers.clone().acquire_owned().await else { return };
    let jobs = st.jobs.clone();
    let mut cfg = st.cfg.pipeline.clone();
    cfg.output_dir = jobs.dir(&id);
    cfg.seed = seed.or(cfg.seed);
    let (table, job_id) = (jobs.clone(), id.clone());
    cfg.observer = Some(StageObserver(Arc::new(move |stage| {
        let _ = table.transition(&job_id, JobState::Running { stage: Some(stage) });
    })));
    let _ = jobs.transition(&id, JobState::Running { stage: None });
    let outcome = tokio::task::spawn_blocking(move || match input {
        Input::Generate(text, style) => run_pipeline(&text, style.as_ref(), &cfg),
        Input::Vectorize(draft) => vectorize_existing(&draft, &cfg),
    })
    .await;
    let next = match outcome {
        Ok(Ok(_)) => JobState::Done,
        Ok(Err(e)) => JobState::Failed { stage: e.stage(), reason: e.to_string() },
        Err(e) => JobState::Failed { stage: None, reason: format!("worker crashed: {e}") },
    };
    if let JobState::Failed { reason, .. } = &next {
        tracing::warn!(job = %id, "failed: {reason}");
    }
    let _ = jobs.transition(&id, next);
}

async fn get_job(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match st.jobs.get(&id) {
        Some(job) => Json(job).into_response(),
        None => not_found("job"),
    }
}

fn media_type(name: &str) -> &'static str {
    match Path::new(name).extension().and_then(|e| e.to_str()) {
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("json") => "application/json",
        Some("txt" | "log") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Only plain relative paths inside the job directory, no dotfiles and no
/// lock file.
fn safe_relative(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::Normal(s) if !s.to_string_lossy().starts_with('.') => out.push(s),
            _ => return None,
        }
    }
    (!out.as_os_str().is_empty() && out != Path::new(LOCK_FILE)).then_some(out)
}

async fn send_file(path: &Path, name: &str) -> Response {
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, media_type(name))], bytes).into_response(),
        Err(_) => not_found("artifact"),
    }
}

/// Download rules shared by the final figure and its edited copy.
// A ready-made response is the natural error here.
#[allow(clippy::result_large_err)]
fn check_download(st: &AppState, id: &str) -> Result<(), Response> {
    let job = st.jobs.get(id).ok_or_else(|| not_found("job"))?;
    if job.state != JobState::Done {
        return Err(error(StatusCode::CONFLICT, "not_ready", "the figure is not finished"));
    }
    if st.cfg.gate_download && !job.feedback_submitted {
        return Err(error(StatusCode::LOCKED, "feedback_required", "submit a rating before downloading"));
    }
    Ok(())
}

async fn get_artifact(State(st): State<AppState>, UrlPath((id, name)): UrlPath<(String, String)>) -> Response {
    let Some(job) = st.jobs.get(&id) else { return not_found("job") };
    let Some(rel) = safe_relative(&name) else { return not_found("artifact") };
    let path = st.jobs.dir(&id).join(&rel);
    if name == FINAL_FILE || name == EDITED_FILE {
        if let Err(r) = check_download(&st, &id) {
            return r;
        }
    } else if !path.is_file() && job.state != JobState::Done {
        return error(StatusCode::CONFLICT, "not_ready", format!("{name} has not been produced yet"));
    }
    send_file(&path, &name).await
}

async fn get_svg(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    if let Err(r) = check_download(&st, &id) {
        return r;
    }
    let dir = st.jobs.dir(&id);
    let name = if dir.join(EDITED_FILE).is_file() { EDITED_FILE } else { FINAL_FILE };
    send_file(&dir.join(name), name).await
}

async fn put_svg(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let Some(job) = st.jobs.get(&id) else { return not_found("job") };
    if job.state != JobState::Done {
        return error(StatusCode::CONFLICT, "not_ready", "the figure is not finished");
    }
    let Ok(text) = std::str::from_utf8(&body) else {
        return error(StatusCode::BAD_REQUEST, "bad_request", "body is not UTF-8");
    };
    let doc = match parse_svg(text) {
        Ok(d) => d,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "invalid_svg", e.to_string()),
    };
    let dir = st.jobs.dir(&id);
    let k = match load_manifest(&dir) {
        Ok(m) => m.k_count,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "manifest", e.to_string()),
    };
    let report = verify_editable_figure(&doc, k, VerifyMode::Edited);
    if !report.is_clean() {
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": "not_editable", "message": report.to_string(), "findings": report.findings })),
        )
            .into_response();
    }
    // Stored verbatim so a reload returns exactly what the editor sent.
    if let Err(e) = write_atomic(&dir.join(EDITED_FILE), &body) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string());
    }
    Json(json!({ "saved": EDITED_FILE, "bytes": body.len() })).into_response()
}

async fn submit_feedback(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let Some(job) = st.jobs.get(&id) else { return not_found("job") };
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", format!("body is not JSON: {e}")),
    };
    let mut record: FeedbackRecord = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "out_of_range", e.to_string()),
    };
    if record.job_id.is_empty() {
        record.job_id = id.clone();
    } else if record.job_id != id {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "job_mismatch", "job_id differs from the URL");
    }
    if let Err(e) = record.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "out_of_range", e.to_string());
    }
    if job.state != JobState::Done {
        return error(StatusCode::CONFLICT, "not_ready", "rate a figure once it is finished");
    }
    let path = st.jobs.root().join(FEEDBACK_FILE);
    let guard = st.feedback.lock().await;
    let stored = record.clone();
    let written = tokio::task::spawn_blocking(move || append_feedback(&path, &stored)).await;
    drop(guard);
    match written {
        Ok(Ok(())) => {}
        Ok(Err(AppendError::Invalid(e))) => return error(StatusCode::UNPROCESSABLE_ENTITY, "out_of_range", e.to_string()),
        Ok(Err(AppendError::Io(e))) => return error(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
    }
    st.jobs.mark_feedback(&id);
    (StatusCode::CREATED, Json(record)).into_response()
}

async fn feedback_metrics(State(st): State<AppState>) -> Response {
    let path = st.jobs.root().join(FEEDBACK_FILE);
    match tokio::task::spawn_blocking(move || read_feedback(&path)).await {
        Ok(Ok(records)) => Json(aggregate_feedback(&records)).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
    }
}
