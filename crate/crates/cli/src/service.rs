//! Local JSON-over-HTTP service around one project file.
//!
//! Reads run concurrently on a snapshot of the project. Mutations go
//! through a single-writer gate, save the file, then swap the snapshot.
//! Training is one background job; while it runs every mutation answers
//! 409.

use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gdoe_core::cluster::ClusterMethod;
use gdoe_core::geometry::Aggregation;
use gdoe_core::response::{Goal, ImportanceConfig, DEFAULT_CONFIDENCE};
use gdoe_core::vae::EpochRecord;
use gdoe_core::{GridSpec, TrainingConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use crate::error::{AppError, AppResult};
use crate::ops::{self, MapKind, DEFAULT_RESOLUTION};
use crate::project::{Project, INITIAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainState {
    Idle,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainStatus {
    pub state: TrainState,
    pub epoch: usize,
    pub epochs: usize,
    pub last: Option<EpochRecord>,
    /// Model generation installed by the last successful run.
    pub generation: Option<u64>,
    pub error: Option<AppError>,
}

impl TrainStatus {
    fn idle() -> Self {
        Self {
            state: TrainState::Idle,
            epoch: 0,
            epochs: 0,
            last: None,
            generation: None,
            error: None,
        }
    }
}

pub struct AppState {
    path: PathBuf,
    project: RwLock<Arc<Project>>,
    gate: Mutex<()>,
    training: StdMutex<TrainStatus>,
}

impl AppState {
    pub fn new(project: Project, path: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            path,
            project: RwLock::new(Arc::new(project)),
            gate: Mutex::new(()),
            training: StdMutex::new(TrainStatus::idle()),
        })
    }

    fn status(&self) -> TrainStatus {
        self.training.lock().expect("status lock").clone()
    }

    fn set_status(&self, f: impl FnOnce(&mut TrainStatus)) {
        f(&mut self.training.lock().expect("status lock"));
    }

    fn training_conflict(&self) -> AppResult<()> {
        if self.status().state == TrainState::Running {
            return Err(AppError::conflict("training_running", "a training job is running; wait for it to finish"));
        }
        Ok(())
    }

    async fn snapshot(&self) -> Arc<Project> {
        self.project.read().await.clone()
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (status, Json(body)).into_response()
    }
}

fn joined<R>(r: Result<AppResult<R>, tokio::task::JoinError>) -> AppResult<R> {
    r.map_err(|e| AppError::internal(format!("worker failed: {e}")))?
}

async fn read<R: Send + 'static>(
    st: &AppState,
    f: impl FnOnce(&Project) -> AppResult<R> + Send + 'static,
) -> AppResult<R> {
    let p = st.snapshot().await;
    joined(tokio::task::spawn_blocking(move || f(&p)).await)
}

async fn mutate<R: Send + 'static>(
    st: &AppState,
    f: impl FnOnce(&mut Project) -> AppResult<R> + Send + 'static,
) -> AppResult<R> {
    let _gate = st.gate.lock().await;
    st.training_conflict()?;
    let current = st.snapshot().await;
    let path = st.path.clone();
    let (next, r) = joined(
        tokio::task::spawn_blocking(move || {
            let mut p = (*current).clone();
            let r = f(&mut p)?;
            p.save(&path)?;
            Ok((p, r))
        })
        .await,
    )?;
    *st.project.write().await = Arc::new(next);
    Ok(r)
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> AppResult<T> {
    b.map(|Json(v)| v)
        .map_err(|e| AppError::validation("bad_request", e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> AppResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| AppError::validation("bad_query", e.body_text()))
}

async fn get_project(State(st): State<Arc<AppState>>) -> AppResult<Json<ops::ProjectSummary>> {
    Ok(Json(ops::summary(&*st.snapshot().await)))
}

#[derive(Debug, Deserialize)]
struct BuildRequest {
    #[serde(default)]
    constraints: Vec<String>,
}

async fn build_design(
    State(st): State<Arc<AppState>>,
    b: Result<Json<BuildRequest>, JsonRejection>,
) -> AppResult<Json<ops::BuildSummary>> {
    let req = body(b)?;
    Ok(Json(mutate(&st, move |p| ops::build_design(p, &req.constraints)).await?))
}

async fn start_training(
    State(st): State<Arc<AppState>>,
    b: Result<Json<TrainingConfig>, JsonRejection>,
) -> AppResult<(StatusCode, Json<TrainStatus>)> {
    let cfg = body(b)?;
    let _gate = st.gate.lock().await;
    st.training_conflict()?;
    let p = st.snapshot().await;
    let prepared = {
        let cfg = cfg.clone();
        joined(tokio::task::spawn_blocking(move || ops::prepare_training(&p, &cfg)).await)?
    };
    st.set_status(|s| {
        *s = TrainStatus {
            state: TrainState::Running,
            epochs: cfg.epochs,
            ..TrainStatus::idle()
        }
    });
    let job = st.clone();
    tokio::spawn(async move {
        let worker = job.clone();
        let run_cfg = cfg.clone();
        let result = tokio::task::spawn_blocking(move || {
            ops::run_training(&prepared, &run_cfg, |r| {
                worker.set_status(|s| {
                    s.epoch = r.epoch + 1;
                    s.last = Some(*r);
                })
            })
        })
        .await;
        let installed = match joined(result) {
            Ok((vae, history)) => {
                let _gate = job.gate.lock().await;
                let mut p = (*job.snapshot().await).clone();
                let generation = ops::install_model(&mut p, vae, history, &cfg);
                match p.save(&job.path) {
                    Ok(()) => {
                        *job.project.write().await = Arc::new(p);
                        Ok(generation)
                    }
                    Err(e) => Err(e),
                }
            }
            Err(e) => Err(e),
        };
        job.set_status(|s| match installed {
            Ok(g) => {
                s.state = TrainState::Done;
                s.generation = Some(g);
            }
            Err(e) => {
                s.state = TrainState::Failed;
                s.error = Some(e);
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(st.status())))
}

async fn training_status(State(st): State<Arc<AppState>>) -> Json<TrainStatus> {
    Json(st.status())
}

#[derive(Debug, Serialize)]
struct EmbeddingBody {
    trials: Vec<ops::EmbeddedTrial>,
}

async fn embedding(State(st): State<Arc<AppState>>) -> AppResult<Json<EmbeddingBody>> {
    let trials = read(&st, ops::embedding).await?;
    Ok(Json(EmbeddingBody { trials }))
}

#[derive(Debug, Deserialize)]
struct MapQuery {
    res: Option<usize>,
    agg: Option<Aggregation>,
    threshold: Option<f64>,
    snap: Option<bool>,
}

async fn field_map(
    State(st): State<Arc<AppState>>,
    Path(kind): Path<String>,
    q: Result<Query<MapQuery>, QueryRejection>,
) -> AppResult<Json<ops::MapReport>> {
    let q = query(q)?;
    let kind = match kind.as_str() {
        "density" => MapKind::Density,
        "gradient" => MapKind::Gradient,
        other => {
            return Err(AppError::not_found(
                "unknown_map",
                format!("no map called `{other}`; use density, gradient or factor/<name>"),
            ))
        }
    };
    let res = q.res.unwrap_or(DEFAULT_RESOLUTION);
    let agg = q.agg.unwrap_or_default();
    Ok(Json(read(&st, move |p| ops::map(p, kind, res, agg, q.threshold)).await?))
}

async fn factor_map(
    State(st): State<Arc<AppState>>,
    Path(name): Path<String>,
    q: Result<Query<MapQuery>, QueryRejection>,
) -> AppResult<Json<ops::MapReport>> {
    let q = query(q)?;
    let res = q.res.unwrap_or(DEFAULT_RESOLUTION);
    let snap = q.snap.unwrap_or(true);
    let map = read(&st, move |p| ops::factor_map(p, &name, res, snap)).await?;
    Ok(Json(ops::MapReport {
        map,
        threshold: None,
        borders: None,
        segments: None,
    }))
}

#[derive(Debug, Deserialize)]
struct SnapQuery {
    #[serde(default)]
    snap: bool,
}

async fn preview_grid(
    State(st): State<Arc<AppState>>,
    q: Result<Query<SnapQuery>, QueryRejection>,
    b: Result<Json<GridSpec>, JsonRejection>,
) -> AppResult<Json<ops::Preview>> {
    let snap = query(q)?.snap;
    let spec = body(b)?;
    Ok(Json(read(&st, move |p| ops::preview(p, &spec, snap)).await?))
}

#[derive(Debug, Deserialize)]
struct SaveGridRequest {
    name: String,
    grid: GridSpec,
}

#[derive(Debug, Serialize)]
struct SavedGridBody {
    name: String,
    points: usize,
}

async fn save_grid(
    State(st): State<Arc<AppState>>,
    b: Result<Json<SaveGridRequest>, JsonRejection>,
) -> AppResult<Json<SavedGridBody>> {
    let req = body(b)?;
    let name = req.name.clone();
    let points = mutate(&st, move |p| ops::save_grid(p, &req.name, req.grid)).await?;
    Ok(Json(SavedGridBody { name, points }))
}

#[derive(Debug, Deserialize)]
struct GenerateRequest {
    grid: String,
    #[serde(default)]
    snap: bool,
    name: Option<String>,
}

async fn generate(
    State(st): State<Arc<AppState>>,
    b: Result<Json<GenerateRequest>, JsonRejection>,
) -> AppResult<Json<crate::project::SavedDesign>> {
    let req = body(b)?;
    let name = req.name.unwrap_or_else(|| req.grid.clone());
    Ok(Json(mutate(&st, move |p| ops::generate_saved(p, &req.grid, req.snap, &name)).await?))
}

#[derive(Debug, Deserialize)]
struct ClusterRequest {
    method: ClusterMethod,
    k: usize,
    #[serde(default)]
    seed: u64,
    name: Option<String>,
}

async fn cluster(
    State(st): State<Arc<AppState>>,
    b: Result<Json<ClusterRequest>, JsonRejection>,
) -> AppResult<Json<gdoe_core::Clusters>> {
    let req = body(b)?;
    let name = req.name.unwrap_or_else(|| "clusters".into());
    Ok(Json(mutate(&st, move |p| ops::cluster(p, req.method, req.k, req.seed, &name)).await?))
}

#[derive(Debug, Deserialize)]
struct ResponsesRequest {
    /// `trial_id, r1, r2, ...` rows.
    csv: String,
    confidence: Option<f64>,
    design: Option<String>,
}

#[derive(Debug, Serialize)]
struct ResponsesBody {
    design: String,
    trials: usize,
}

async fn responses(
    State(st): State<Arc<AppState>>,
    b: Result<Json<ResponsesRequest>, JsonRejection>,
) -> AppResult<Json<ResponsesBody>> {
    let req = body(b)?;
    let design = req.design.unwrap_or_else(|| INITIAL.into());
    let target = design.clone();
    let conf = req.confidence.unwrap_or(DEFAULT_CONFIDENCE);
    let trials = mutate(&st, move |p| ops::record_responses(p, &req.csv, conf, &target)).await?;
    Ok(Json(ResponsesBody { design, trials }))
}

#[derive(Debug, Deserialize)]
struct SurfaceQuery {
    res: Option<usize>,
    goal: Option<Goal>,
}

async fn surface(
    State(st): State<Arc<AppState>>,
    q: Result<Query<SurfaceQuery>, QueryRejection>,
) -> AppResult<Json<ops::SurfaceReport>> {
    let q = query(q)?;
    let res = q.res.unwrap_or(DEFAULT_RESOLUTION);
    let goal = q.goal.unwrap_or_default();
    Ok(Json(read(&st, move |p| ops::surface(p, res, goal)).await?))
}

#[derive(Debug, Deserialize)]
struct ImportanceQuery {
    reps: Option<usize>,
    seed: Option<u64>,
    epochs: Option<usize>,
}

async fn importance(
    State(st): State<Arc<AppState>>,
    q: Result<Query<ImportanceQuery>, QueryRejection>,
) -> AppResult<Json<gdoe_core::response::ImportanceReport>> {
    let q = query(q)?;
    let d = ImportanceConfig::default();
    let cfg = ImportanceConfig {
        replications: q.reps.unwrap_or(d.replications),
        seed: q.seed.unwrap_or(d.seed),
        epochs: q.epochs.unwrap_or(d.epochs),
        ..d
    };
    Ok(Json(read(&st, move |p| ops::run_importance(p, &cfg)).await?))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    design: Option<String>,
}

async fn export_design(
    State(st): State<Arc<AppState>>,
    q: Result<Query<ExportQuery>, QueryRejection>,
) -> AppResult<impl IntoResponse> {
    let q = query(q)?;
    let csv = read(&st, move |p| ops::export_design(p, q.design.as_deref())).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn not_found() -> AppError {
    AppError::not_found("no_route", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/project", get(get_project))
        .route("/api/design/build", post(build_design))
        .route("/api/train", post(start_training))
        .route("/api/train/status", get(training_status))
        .route("/api/embedding", get(embedding))
        .route("/api/map/factor/{name}", get(factor_map))
        .route("/api/map/{kind}", get(field_map))
        .route("/api/grid/preview", post(preview_grid))
        .route("/api/grid/save", post(save_grid))
        .route("/api/generate", post(generate))
        .route("/api/cluster", post(cluster))
        .route("/api/responses", post(responses))
        .route("/api/surface", get(surface))
        .route("/api/importance", get(importance))
        .route("/api/export/design.csv", get(export_design))
        .fallback(not_found)
        .with_state(state)
}

pub async fn serve(project: Project, path: PathBuf, host: &str, port: u16) -> AppResult<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    let addr = listener.local_addr()?;
    eprintln!("serving {} on http://{addr}", path.display());
    axum::serve(listener, router(AppState::new(project, path))).await?;
    Ok(())
}
