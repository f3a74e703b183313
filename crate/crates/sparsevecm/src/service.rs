//! What-if scenario service over an immutable model bundle.
//!
//! Point JIRFs are answered in the request. Bootstrap requests become jobs
//! that run on a bounded pool of blocking workers; the job registry is the
//! only mutable state. Errors are `application/problem+json` documents
//! with a stable `code`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sparsevecm_core::bootstrap::bootstrap_jirfs;
use sparsevecm_core::jirf::{compute_jirf, to_vma};
use sparsevecm_core::{build_shock, to_vecm, Error as CoreError, JirfResult, ShockScenario, ShockSource, VecmView, VmaForm};
use tokio::sync::Semaphore;

use crate::error::{AppError, AppResult};
use crate::grid::{export_grid, GridExport};
use crate::pipeline::ModelBundle;

/// Longest horizon served.
pub const MIN_HORIZON_CAP: usize = 52;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub code: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<FieldError>,
}

impl Problem {
    pub fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Problem {
            kind: format!("urn:sparsevecm:problem:{code}"),
            title: status.canonical_reason().unwrap_or("error").to_string(),
            status: status.as_u16(),
            code: code.to_string(),
            detail: detail.into(),
            errors: Vec::new(),
        }
    }

    fn with_errors(mut self, errors: Vec<FieldError>) -> Self {
        self.errors = errors;
        self
    }
}

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_vec(&self).expect("problem serializes");
        (status, [(header::CONTENT_TYPE, "application/problem+json")], body).into_response()
    }
}

fn field(field: &str, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

fn core_problem(e: &CoreError) -> Problem {
    match e.root() {
        CoreError::EmptyScenario => Problem::new(StatusCode::BAD_REQUEST, "scenario.empty", e.to_string())
            .with_errors(vec![field("series", "at least one series must be shocked")]),
        CoreError::UnknownSeries(s) => Problem::new(StatusCode::NOT_FOUND, "series.unknown", format!("unknown series `{s}`")),
        CoreError::UnknownPeriod(p) => Problem::new(StatusCode::NOT_FOUND, "period.unknown", format!("unknown period `{p}`")),
        CoreError::DegenerateShock { .. } => {
            Problem::new(StatusCode::UNPROCESSABLE_ENTITY, "shock.degenerate", e.to_string())
        }
        CoreError::InvalidArgument(m) => Problem::new(StatusCode::BAD_REQUEST, "scenario.invalid", m.clone()),
        CoreError::TooManyDroppedReplicates { .. } => {
            Problem::new(StatusCode::UNPROCESSABLE_ENTITY, "bootstrap.failed", e.to_string())
        }
        _ => Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceRequest {
    SeriesStd,
    ResidualStd,
    User,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    /// Model period; the first one when absent.
    #[serde(default)]
    pub period: Option<String>,
    #[serde(default)]
    pub series: Vec<String>,
    /// Explicit magnitudes; implies the `user` source.
    #[serde(default)]
    pub magnitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub source: Option<SourceRequest>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapRequest {
    #[serde(flatten)]
    pub scenario: ScenarioRequest,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<JirfResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Problem>,
}

pub struct ServiceState {
    pub bundle: ModelBundle,
    pub vmas: BTreeMap<String, VmaForm>,
    pub vecms: BTreeMap<String, VecmView>,
    pub horizon_cap: usize,
    jobs: Mutex<BTreeMap<u64, JobView>>,
    next_job: AtomicU64,
    workers: Arc<Semaphore>,
}

impl ServiceState {
    pub fn new(bundle: ModelBundle, workers: usize) -> AppResult<Self> {
        if bundle.fits.is_empty() {
            return Err(AppError::Config("model bundle has no fitted periods".into()));
        }
        let horizon_cap = bundle.index.horizon.max(MIN_HORIZON_CAP);
        let mut vmas = BTreeMap::new();
        let mut vecms = BTreeMap::new();
        for (name, fit) in &bundle.fits {
            vmas.insert(name.clone(), to_vma(&fit.coefficients, horizon_cap)?);
            vecms.insert(name.clone(), to_vecm(fit)?);
        }
        Ok(ServiceState {
            bundle,
            vmas,
            vecms,
            horizon_cap,
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    pub fn load(dir: &Path, workers: usize) -> AppResult<Self> {
        Self::new(ModelBundle::load(dir)?, workers)
    }

    fn default_period(&self) -> &str {
        &self.bundle.index.periods[0].name
    }

    fn period<'a>(&'a self, requested: &'a Option<String>) -> Result<&'a str, Problem> {
        let name = requested.as_deref().unwrap_or_else(|| self.default_period());
        if self.bundle.fits.contains_key(name) {
            Ok(name)
        } else {
            Err(Problem::new(StatusCode::NOT_FOUND, "period.unknown", format!("unknown period `{name}`")))
        }
    }

    /// Validates a request and builds the scenario against the period's
    /// model.
    pub fn scenario(&self, req: &ScenarioRequest) -> Result<(String, ShockScenario), Problem> {
        if req.series.is_empty() {
            return Err(core_problem(&CoreError::EmptyScenario));
        }
        let period = self.period(&req.period)?.to_string();
        let mut errors = Vec::new();
        let horizon = req.horizon.unwrap_or(self.bundle.index.horizon);
        if horizon > self.horizon_cap {
            errors.push(field("horizon", format!("must be at most {}", self.horizon_cap)));
        }
        for (k, s) in req.series.iter().enumerate() {
            if req.series[..k].contains(s) {
                errors.push(field(&format!("series[{k}]"), format!("`{s}` is listed twice")));
            }
        }
        let source = match (req.source, &req.magnitudes) {
            (Some(SourceRequest::User) | None, Some(m)) => {
                if m.len() != req.series.len() {
                    errors.push(field(
                        "magnitudes",
                        format!("{} values for {} series", m.len(), req.series.len()),
                    ));
                }
                for (k, v) in m.iter().enumerate() {
                    if !v.is_finite() {
                        errors.push(field(&format!("magnitudes[{k}]"), "must be finite"));
                    }
                }
                ShockSource::User { magnitudes: m.clone() }
            }
            (Some(SourceRequest::User), None) => {
                errors.push(field("magnitudes", "required when source is `user`"));
                ShockSource::User { magnitudes: Vec::new() }
            }
            (Some(_), Some(_)) => {
                errors.push(field("magnitudes", "only allowed with source `user`"));
                ShockSource::ResidualStd
            }
            (Some(SourceRequest::ResidualStd), None) => ShockSource::ResidualStd,
            (Some(SourceRequest::SeriesStd) | None, None) => ShockSource::SeriesStd { period: Some(period.clone()) },
        };
        if !errors.is_empty() {
            return Err(Problem::new(StatusCode::BAD_REQUEST, "scenario.invalid", "the scenario has invalid fields")
                .with_errors(errors));
        }
        let fit = &self.bundle.fits[&period];
        let sc = build_shock(&self.bundle.panel, Some(fit), &req.series, source, horizon)
            .map_err(|e| core_problem(&e))?;
        Ok((period, sc))
    }

    /// Point JIRF, exactly as the library computes it.
    pub fn point_jirf(&self, req: &ScenarioRequest) -> Result<JirfResult, Problem> {
        let (period, sc) = self.scenario(req)?;
        let fit = &self.bundle.fits[&period];
        compute_jirf(&self.vmas[&period], &fit.residual_cov, &fit.series, &sc).map_err(|e| core_problem(&e))
    }

    fn run_bootstrap(&self, period: &str, sc: &ShockScenario, req: &BootstrapRequest) -> Result<JirfResult, Problem> {
        let fit = &self.bundle.fits[period];
        let mut point =
            compute_jirf(&self.vmas[period], &fit.residual_cov, &fit.series, sc).map_err(|e| core_problem(&e))?;
        let mut spec = self.bundle.index.bootstrap.spec(req.seed.unwrap_or(self.bundle.index.seed));
        spec.keep_draws = false;
        if let Some(b) = req.replicates {
            spec.replicates = b;
        }
        if let Some(c) = req.confidence {
            spec.confidence = c;
        }
        let slice = self.bundle.panel.slice_period(period).map_err(|e| core_problem(&e))?;
        let mut dists = bootstrap_jirfs(fit, &slice, std::slice::from_ref(sc), &spec, &self.bundle.index.elastic_net)
            .map_err(|e| core_problem(&e))?;
        point.bootstrap = Some(dists.remove(0));
        Ok(point)
    }

    fn job(&self, id: u64) -> Option<JobView> {
        self.jobs.lock().expect("job registry").get(&id).cloned()
    }

    fn update_job(&self, id: u64, f: impl FnOnce(&mut JobView)) {
        if let Some(j) = self.jobs.lock().expect("job registry").get_mut(&id) {
            f(j);
        }
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Problem> {
    serde_json::from_slice(body).map_err(|e| {
        Problem::new(StatusCode::BAD_REQUEST, "body.malformed", format!("request body is not a valid scenario: {e}"))
    })
}

type Shared = Arc<ServiceState>;

async fn get_model(State(st): State<Shared>) -> Response {
    #[derive(Serialize)]
    struct PeriodInfo {
        name: String,
        start: String,
        end: String,
        rows: usize,
        lags: usize,
        lambda: f64,
        gamma: f64,
        nonzero: usize,
        spectral_radius: f64,
    }
    #[derive(Serialize)]
    struct ModelInfo {
        series: Vec<String>,
        commodities: Vec<String>,
        regions: Vec<String>,
        n_series: usize,
        n_times: usize,
        default_period: String,
        horizon: usize,
        horizon_cap: usize,
        periods: Vec<PeriodInfo>,
    }
    let panel = &st.bundle.panel;
    let periods = st
        .bundle
        .index
        .periods
        .iter()
        .map(|p| {
            let fit = &st.bundle.fits[&p.name];
            let tag = panel.period(&p.name).ok();
            PeriodInfo {
                name: p.name.clone(),
                start: tag.map(|t| panel.dates[t.start].to_string()).unwrap_or_default(),
                end: tag.map(|t| panel.dates[t.end - 1].to_string()).unwrap_or_default(),
                rows: tag.map_or(0, |t| t.len()),
                lags: fit.lags,
                lambda: fit.lambda,
                gamma: fit.gamma,
                nonzero: fit.nonzero,
                spectral_radius: fit.spectral_radius(),
            }
        })
        .collect();
    Json(ModelInfo {
        series: panel.labels(),
        commodities: panel.commodities(),
        regions: panel.regions(),
        n_series: panel.n_series(),
        n_times: panel.n_times(),
        default_period: st.default_period().to_string(),
        horizon: st.bundle.index.horizon,
        horizon_cap: st.horizon_cap,
        periods,
    })
    .into_response()
}

async fn post_jirf(State(st): State<Shared>, body: Bytes) -> Response {
    let req: ScenarioRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(p) => return p.into_response(),
    };
    match st.point_jirf(&req) {
        Ok(r) => Json(r).into_response(),
        Err(p) => p.into_response(),
    }
}

async fn post_bootstrap(State(st): State<Shared>, body: Bytes) -> Response {
    let req: BootstrapRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(p) => return p.into_response(),
    };
    let (period, sc) = match st.scenario(&req.scenario) {
        Ok(v) => v,
        Err(p) => return p.into_response(),
    };
    let mut errors = Vec::new();
    if req.replicates.is_some_and(|b| b < 2) {
        errors.push(field("replicates", "must be at least 2"));
    }
    if req.confidence.is_some_and(|c| !(c > 0.0 && c < 1.0)) {
        errors.push(field("confidence", "must be in (0, 1)"));
    }
    if !errors.is_empty() {
        return Problem::new(StatusCode::BAD_REQUEST, "scenario.invalid", "the bootstrap request has invalid fields")
            .with_errors(errors)
            .into_response();
    }
    let id = st.next_job.fetch_add(1, Ordering::Relaxed);
    st.jobs
        .lock()
        .expect("job registry")
        .insert(id, JobView { id: id.to_string(), status: JobStatus::Queued, result: None, error: None });
    let worker = st.clone();
    tokio::spawn(async move {
        let Ok(_permit) = worker.workers.clone().acquire_owned().await else {
            return;
        };
        worker.update_job(id, |j| j.status = JobStatus::Running);
        let inner = worker.clone();
        let outcome = tokio::task::spawn_blocking(move || inner.run_bootstrap(&period, &sc, &req)).await;
        worker.update_job(id, |j| match outcome {
            Ok(Ok(r)) => {
                j.status = JobStatus::Done;
                j.result = Some(r);
            }
            Ok(Err(p)) => {
                j.status = JobStatus::Failed;
                j.error = Some(p);
            }
            Err(e) => {
                j.status = JobStatus::Failed;
                j.error = Some(Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()));
            }
        });
    });
    #[derive(Serialize)]
    struct Accepted {
        job_id: String,
        status_url: String,
    }
    (StatusCode::ACCEPTED, Json(Accepted { job_id: id.to_string(), status_url: format!("/jobs/{id}") }))
        .into_response()
}

async fn get_job(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match id.parse::<u64>().ok().and_then(|n| st.job(n)) {
        Some(j) => Json(j).into_response(),
        None => Problem::new(StatusCode::NOT_FOUND, "job.not_found", format!("no job `{id}`")).into_response(),
    }
}

async fn get_grid(State(st): State<Shared>, UrlPath((period, matrix)): UrlPath<(String, String)>) -> Response {
    let Some(vecm) = st.vecms.get(&period) else {
        return Problem::new(StatusCode::NOT_FOUND, "period.unknown", format!("unknown period `{period}`"))
            .into_response();
    };
    match export_grid(vecm, &matrix, &period) {
        Ok(g) => Json::<GridExport>(g).into_response(),
        Err(AppError::Core(CoreError::InvalidArgument(m))) => {
            Problem::new(StatusCode::NOT_FOUND, "matrix.unknown", m).into_response()
        }
        Err(e) => Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()).into_response(),
    }
}

async fn fallback() -> Response {
    Problem::new(StatusCode::NOT_FOUND, "route.not_found", "no such endpoint").into_response()
}

pub fn router(state: Shared, ui: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/model", get(get_model))
        .route("/jirf", post(post_jirf))
        .route("/jirf/bootstrap", post(post_bootstrap))
        .route("/jobs/{id}", get(get_job))
        .route("/grids/{period}/{matrix}", get(get_grid))
        .fallback(fallback)
        .with_state(state);
    if let Some(dir) = ui {
        app = app.nest_service("/ui", tower_http::services::ServeDir::new(dir));
    }
    app
}

pub async fn serve(model_dir: &Path, addr: SocketAddr, ui: Option<PathBuf>, workers: usize) -> AppResult<()> {
    let state = Arc::new(ServiceState::load(model_dir, workers)?);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| AppError::io(addr.to_string(), e))?;
    log::info!("serving {} on {}", model_dir.display(), listener.local_addr().map_err(|e| AppError::io("socket", e))?);
    axum::serve(listener, router(state, ui))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io(addr.to_string(), e))
}
