//! JSON-over-HTTP API. Sessions persist as JSON journals under a state root
//! and are restored on startup.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use dagcheck::graph::{apply_edit, parse_dag, serialize_dag, CausalDag, DagEdit, GraphError};
use dagcheck::implications::implied_independencies;
use dagcheck::refine::{Choice, DeciderKind, FailureDiagnosis, RefineOptions, RefinementSession, Refiner, SessionStatus};
use dagcheck::report::render_session;
use dagcheck::stats::{coverage_gap, evaluate_dag_streaming, DatasetTable, Evaluation, Summary, TestConfig, TestResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::{mpsc, Mutex, RwLock, Semaphore};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
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
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetRef {
    digest: String,
    rows: usize,
    dropped_rows: usize,
    columns: Vec<String>,
}

/// What a session journal stores on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionRecord {
    id: String,
    dag: CausalDag,
    dataset: Option<DatasetRef>,
    refinement: Option<RefinementSession>,
}

struct LiveSession {
    record: SessionRecord,
    data: Option<Arc<DatasetTable>>,
}

type CacheKey = (String, String, String);

pub struct AppState {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    cache: std::sync::Mutex<HashMap<CacheKey, Arc<Evaluation>>>,
    workers: Arc<Semaphore>,
    counter: AtomicU64,
}

fn sessions_dir(root: &FsPath) -> PathBuf {
    root.join("sessions")
}

fn datasets_dir(root: &FsPath) -> PathBuf {
    root.join("datasets")
}

impl AppState {
    /// Opens the state root, replaying every stored session journal.
    pub fn open(root: impl Into<PathBuf>, workers: usize) -> anyhow::Result<Arc<Self>> {
        let root = root.into();
        std::fs::create_dir_all(sessions_dir(&root))?;
        std::fs::create_dir_all(datasets_dir(&root))?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(sessions_dir(&root))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let record: SessionRecord = serde_json::from_slice(&std::fs::read(&path)?)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            if let Some(r) = &record.refinement {
                let replayed = r.replay()?;
                anyhow::ensure!(
                    replayed == r.final_dag,
                    "{}: refinement journal does not replay",
                    path.display()
                );
            }
            let data = match &record.dataset {
                Some(d) => {
                    let file = std::fs::File::open(datasets_dir(&root).join(format!("{}.csv", d.digest)))?;
                    Some(Arc::new(DatasetTable::from_csv(file)?))
                }
                None => None,
            };
            sessions.insert(record.id.clone(), Arc::new(Mutex::new(LiveSession { record, data })));
        }
        Ok(Arc::new(AppState {
            root,
            sessions: RwLock::new(sessions),
            cache: std::sync::Mutex::new(HashMap::new()),
            workers: Arc::new(Semaphore::new(workers.max(1))),
            counter: AtomicU64::new(0),
        }))
    }

    fn new_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        let digest = Sha256::digest(format!("{nanos}:{n}:{}", std::process::id()));
        hex::encode(&digest[..8])
    }

    async fn session(&self, id: &str) -> ApiResult<Arc<Mutex<LiveSession>>> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")))
    }

    fn persist(&self, record: &SessionRecord) -> ApiResult<()> {
        let path = sessions_dir(&self.root).join(format!("{}.json", record.id));
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_vec_pretty(record).map_err(ApiError::internal)?;
        std::fs::write(&tmp, text).map_err(ApiError::internal)?;
        std::fs::rename(&tmp, &path).map_err(ApiError::internal)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/dag", put(put_dag))
        .route("/sessions/:id/edits", post(post_edit))
        .route("/sessions/:id/implications", get(get_implications))
        .route("/sessions/:id/dataset", put(put_dataset))
        .route("/sessions/:id/evaluations", post(post_evaluation))
        .route("/sessions/:id/refinement", post(start_refinement))
        .route("/sessions/:id/proposals", get(get_proposals))
        .route("/sessions/:id/choice", post(post_choice))
        .route("/sessions/:id/report", get(get_report))
        .with_state(state)
}

#[derive(Serialize)]
struct SessionView {
    id: String,
    dag_fingerprint: String,
    dag: String,
    dataset: Option<DatasetRef>,
    refinement_status: Option<SessionStatus>,
}

fn view(record: &SessionRecord) -> SessionView {
    SessionView {
        id: record.id.clone(),
        dag_fingerprint: record.dag.fingerprint(),
        dag: serialize_dag(&record.dag),
        dataset: record.dataset.clone(),
        refinement_status: record.refinement.as_ref().map(|r| r.status),
    }
}

fn parse_error(e: GraphError) -> ApiError {
    ApiError::bad_request("invalid_dag", e.to_string())
}

fn json_body<T: for<'de> Deserialize<'de>>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request("malformed_payload", e.to_string()))
}

#[derive(Deserialize)]
struct CreateSession {
    dag: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req: CreateSession = json_body(&body)?;
    let dag = parse_dag(&req.dag).map_err(parse_error)?;
    let record = SessionRecord {
        id: state.new_id(),
        dag,
        dataset: None,
        refinement: None,
    };
    state.persist(&record)?;
    let v = view(&record);
    state
        .sessions
        .write()
        .await
        .insert(record.id.clone(), Arc::new(Mutex::new(LiveSession { record, data: None })));
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = state.session(&id).await?;
    let s = s.lock().await;
    Ok(Json(view(&s.record)))
}

fn check_fingerprint(current: &CausalDag, expected: &str) -> ApiResult<()> {
    let fp = current.fingerprint();
    if fp == expected {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::CONFLICT,
            "stale_fingerprint",
            format!("session DAG is at {fp}, request was made against {expected}"),
        ))
    }
}

/// Replaces the DAG; any refinement in progress is discarded.
fn replace_dag(state: &AppState, s: &mut LiveSession, dag: CausalDag) -> ApiResult<SessionView> {
    let mut record = s.record.clone();
    record.dag = dag;
    record.refinement = None;
    state.persist(&record)?;
    s.record = record;
    Ok(view(&s.record))
}

#[derive(Deserialize)]
struct PutDag {
    expected_fingerprint: String,
    dag: String,
}

async fn put_dag(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let req: PutDag = json_body(&body)?;
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    check_fingerprint(&s.record.dag, &req.expected_fingerprint)?;
    let dag = parse_dag(&req.dag).map_err(parse_error)?;
    Ok(Json(replace_dag(&state, &mut s, dag)?))
}

#[derive(Deserialize)]
struct PostEdit {
    expected_fingerprint: String,
    edit: DagEdit,
}

async fn post_edit(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let req: PostEdit = json_body(&body)?;
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    check_fingerprint(&s.record.dag, &req.expected_fingerprint)?;
    let dag = apply_edit(&s.record.dag, &req.edit).map_err(|e| ApiError::bad_request("invalid_edit", e.to_string()))?;
    Ok(Json(replace_dag(&state, &mut s, dag)?))
}

/// Same bytes as `dagcheck implications --format json`.
async fn get_implications(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.session(&id).await?;
    let dag = s.lock().await.record.dag.clone();
    let hs = implied_independencies(&dag).map_err(|e| ApiError::bad_request("implications_failed", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], format!("{}\n", hs.to_json())).into_response())
}

#[derive(Serialize)]
struct DatasetView {
    dag_fingerprint: String,
    dataset: DatasetRef,
    /// Observed DAG variables without a column.
    missing_columns: Vec<String>,
}

async fn put_dataset(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<DatasetView>> {
    let table = DatasetTable::from_csv(body.as_ref()).map_err(|e| ApiError::bad_request("invalid_dataset", e.to_string()))?;
    let digest = table.digest();
    let path = datasets_dir(&state.root).join(format!("{digest}.csv"));
    if !path.exists() {
        table.write_csv(std::fs::File::create(&path).map_err(ApiError::internal)?).map_err(ApiError::internal)?;
    }
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    let info = DatasetRef {
        digest,
        rows: table.row_count(),
        dropped_rows: table.dropped_rows(),
        columns: table.names().to_vec(),
    };
    let mut record = s.record.clone();
    record.dataset = Some(info.clone());
    record.refinement = None;
    state.persist(&record)?;
    s.record = record;
    let missing = coverage_gap(&table, &s.record.dag);
    s.data = Some(Arc::new(table));
    Ok(Json(DatasetView {
        dag_fingerprint: s.record.dag.fingerprint(),
        dataset: info,
        missing_columns: missing,
    }))
}

/// Optional overrides of the default test configuration.
#[derive(Debug, Default, Deserialize)]
struct RunRequest {
    alpha: Option<f64>,
    permutations: Option<usize>,
    seed: Option<u64>,
    max_iterations: Option<usize>,
    auxiliary_test: Option<bool>,
}

impl RunRequest {
    fn parse(body: &Bytes) -> ApiResult<Self> {
        if body.iter().all(u8::is_ascii_whitespace) {
            Ok(RunRequest::default())
        } else {
            json_body(body)
        }
    }

    fn config(&self) -> ApiResult<TestConfig> {
        let d = TestConfig::default();
        let c = TestConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            permutations: self.permutations.unwrap_or(d.permutations),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
            ..d
        };
        c.validate().map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        Ok(c)
    }

    fn options(&self) -> RefineOptions {
        let d = RefineOptions::default();
        RefineOptions {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            auxiliary_test: self.auxiliary_test.unwrap_or(d.auxiliary_test),
        }
    }
}

fn require_data(s: &LiveSession) -> ApiResult<Arc<DatasetTable>> {
    let data = s
        .data
        .clone()
        .ok_or_else(|| ApiError::bad_request("no_dataset", "upload a dataset CSV before running tests"))?;
    let gap = coverage_gap(&data, &s.record.dag);
    if !gap.is_empty() {
        return Err(ApiError::bad_request(
            "coverage_gap",
            format!("dataset has no column for: {}", gap.join(", ")),
        ));
    }
    Ok(data)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StreamLine<'a> {
    Result {
        dag_fingerprint: &'a str,
        index: usize,
        result: &'a TestResult,
    },
    Summary {
        dag_fingerprint: &'a str,
        summary: Summary,
        cached: bool,
    },
    Error {
        dag_fingerprint: &'a str,
        message: String,
    },
}

fn line(l: &StreamLine) -> String {
    let mut s = serde_json::to_string(l).expect("stream line serializes");
    s.push('\n');
    s
}

/// Streams one NDJSON line per tested claim, then a summary line. Completed
/// runs are cached by DAG fingerprint, dataset digest and config digest.
async fn post_evaluation(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let config = RunRequest::parse(&body)?.config()?;
    let s = state.session(&id).await?;
    let (dag, data, digest) = {
        let s = s.lock().await;
        let data = require_data(&s)?;
        let digest = s.record.dataset.as_ref().map(|d| d.digest.clone()).unwrap_or_default();
        (s.record.dag.clone(), data, digest)
    };
    let fp = dag.fingerprint();
    let key = (fp.clone(), digest, config.digest());
    let (tx, rx) = mpsc::channel::<String>(64);
    let cached = state.cache.lock().expect("cache lock").get(&key).cloned();
    match cached {
        Some(eval) => {
            tokio::spawn(async move {
                for (i, r) in eval.results.iter().enumerate() {
                    let l = line(&StreamLine::Result { dag_fingerprint: &fp, index: i, result: r });
                    if tx.send(l).await.is_err() {
                        return;
                    }
                }
                let _ = tx
                    .send(line(&StreamLine::Summary { dag_fingerprint: &fp, summary: eval.summary, cached: true }))
                    .await;
            });
        }
        None => {
            let permit = state.workers.clone().acquire_owned().await.map_err(ApiError::internal)?;
            let state = state.clone();
            tokio::task::spawn_blocking(move || {
                let _permit = permit;
                let mut index = 0;
                let outcome = evaluate_dag_streaming(&data, &dag, &config, |r| {
                    let _ = tx.blocking_send(line(&StreamLine::Result { dag_fingerprint: &fp, index, result: r }));
                    index += 1;
                });
                match outcome {
                    Ok(eval) => {
                        let summary = eval.summary;
                        state.cache.lock().expect("cache lock").insert(key, Arc::new(eval));
                        let _ = tx.blocking_send(line(&StreamLine::Summary { dag_fingerprint: &fp, summary, cached: false }));
                    }
                    Err(e) => {
                        let _ = tx.blocking_send(line(&StreamLine::Error { dag_fingerprint: &fp, message: e.to_string() }));
                    }
                }
            });
        }
    }
    let stream = futures_util::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|l| (Ok::<_, Infallible>(l), rx))
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}

#[derive(Serialize)]
struct RefinementView {
    dag_fingerprint: String,
    status: SessionStatus,
    steps: usize,
    edits: Vec<String>,
    pending: Option<FailureDiagnosis>,
}

fn refinement_view(r: &RefinementSession) -> RefinementView {
    RefinementView {
        dag_fingerprint: r.final_dag.fingerprint(),
        status: r.status,
        steps: r.steps.len(),
        edits: r.edits().map(|e| e.edit.to_string()).collect(),
        pending: r.pending().cloned(),
    }
}

fn refine_error(e: dagcheck::refine::RefineError) -> ApiError {
    ApiError::bad_request("refinement_failed", e.to_string())
}

/// Evaluates the session DAG and stops at the first failure for a human decision.
async fn start_refinement(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<RefinementView>> {
    let req = RunRequest::parse(&body)?;
    let (config, options) = (req.config()?, req.options());
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    let data = require_data(&s)?;
    let dag = s.record.dag.clone();
    let permit = state.workers.clone().acquire_owned().await.map_err(ApiError::internal)?;
    let session = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        Refiner::start(dag, &data, config, options).map(Refiner::into_session)
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(refine_error)?;
    let mut record = s.record.clone();
    record.dag = session.final_dag.clone();
    record.refinement = Some(session);
    state.persist(&record)?;
    s.record = record;
    Ok(Json(refinement_view(s.record.refinement.as_ref().expect("just set"))))
}

fn refinement_of(s: &LiveSession) -> ApiResult<&RefinementSession> {
    s.record
        .refinement
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_refinement", "no refinement session started"))
}

async fn get_proposals(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<RefinementView>> {
    let s = state.session(&id).await?;
    let s = s.lock().await;
    Ok(Json(refinement_view(refinement_of(&s)?)))
}

#[derive(Deserialize)]
struct PostChoice {
    expected_fingerprint: String,
    #[serde(flatten)]
    choice: Choice,
}

async fn post_choice(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<RefinementView>> {
    let req: PostChoice = json_body(&body)?;
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    let current = refinement_of(&s)?.clone();
    check_fingerprint(&current.final_dag, &req.expected_fingerprint)?;
    if current.pending().is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "nothing_pending", "no proposal is awaiting a decision"));
    }
    let data = require_data(&s)?;
    let permit = state.workers.clone().acquire_owned().await.map_err(ApiError::internal)?;
    let choice = req.choice;
    let session = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let mut r = Refiner::resume(current, &data)?;
        r.choose(choice, DeciderKind::Human)?;
        Ok::<_, dagcheck::refine::RefineError>(r.into_session())
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(refine_error)?;
    let mut record = s.record.clone();
    record.dag = session.final_dag.clone();
    record.refinement = Some(session);
    state.persist(&record)?;
    s.record = record;
    Ok(Json(refinement_view(s.record.refinement.as_ref().expect("just set"))))
}

#[derive(Serialize)]
struct ReportView {
    dag_fingerprint: String,
    text: String,
    session: RefinementSession,
}

/// The narrative equals what `dagcheck refine` prints for the same session.
async fn get_report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ReportView>> {
    let s = state.session(&id).await?;
    let s = s.lock().await;
    let r = refinement_of(&s)?;
    Ok(Json(ReportView {
        dag_fingerprint: r.final_dag.fingerprint(),
        text: render_session(r),
        session: r.clone(),
    }))
}
