//! JSON-over-HTTP service for interactive revision sessions.

mod store;

pub use store::{now_secs, ApiSession, SessionStore};

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use layrev_core::backend::ReviserBackend;
use layrev_core::layout::{parse_layout_raw, validate_layout, LayoutDoc, Violation};
use layrev_core::metrics::{fid_layouts, EmbedConfig, FidConfig};
use layrev_core::orchestrator::{ChainConfig, OrchestratorError, RoundRecord, SessionState, SessionStatus};
use layrev_core::prompt::ModelSetup;
use layrev_core::render::render_clipped;
use layrev_core::trajectory::Split;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Classes;
use crate::corpus::load_corpus;
use crate::image::encode_png;

pub type BackendMap = BTreeMap<String, Arc<dyn ReviserBackend>>;

pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
    pub ttl: Duration,
    pub render_scale: u32,
    pub classes: Classes,
    pub backends: BackendMap,
}

struct Inner {
    store: SessionStore,
    corpus_dir: Option<PathBuf>,
    render_scale: u32,
    classes: Classes,
    backends: BackendMap,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    layouts: RwLock<HashMap<String, LayoutDoc>>,
    renders: RwLock<HashMap<String, Arc<Vec<u8>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the session store and indexes the layouts of stored sessions for
    /// the render endpoint.
    pub fn new(cfg: ServiceConfig) -> std::io::Result<Self> {
        let store = SessionStore::open(&cfg.data_dir, cfg.ttl)?;
        let state = AppState(Arc::new(Inner {
            store,
            corpus_dir: cfg.corpus_dir,
            render_scale: cfg.render_scale.max(1),
            classes: cfg.classes,
            backends: cfg.backends,
            locks: Mutex::new(HashMap::new()),
            layouts: RwLock::new(HashMap::new()),
            renders: RwLock::new(HashMap::new()),
        }));
        for s in state.0.store.list()? {
            state.index_session(&s.state);
        }
        Ok(state)
    }

    pub fn store(&self) -> &SessionStore {
        &self.0.store
    }

    fn register(&self, doc: &LayoutDoc) -> String {
        let id = doc.content_id();
        self.0.layouts.write().unwrap().entry(id.clone()).or_insert_with(|| doc.clone());
        id
    }

    fn index_session(&self, st: &SessionState) {
        self.register(&st.s0);
        for r in &st.rounds {
            self.register(r.output());
        }
        for h in &st.human_injections {
            self.register(&h.layout);
        }
    }

    fn session_lock(&self, token: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.0.locks.lock().unwrap().entry(token.to_string()).or_default().clone()
    }

    fn load(&self, token: &str) -> Result<ApiSession, ApiError> {
        self.0.store.get(token).map_err(ApiError::internal)?.ok_or_else(|| ApiError::not_found(format!("unknown session {token}")))
    }

    fn png(&self, id: &str) -> Result<Arc<Vec<u8>>, ApiError> {
        if let Some(png) = self.0.renders.read().unwrap().get(id) {
            return Ok(png.clone());
        }
        let doc = self.0.layouts.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown render {id}")))?;
        let bitmap = render_clipped(&doc, &self.0.classes.legend, self.0.render_scale).map_err(ApiError::internal)?;
        let png = Arc::new(encode_png(&bitmap).map_err(ApiError::internal)?);
        Ok(self.0.renders.write().unwrap().entry(id.to_string()).or_insert(png).clone())
    }
}

pub fn render_url(doc: &LayoutDoc) -> String {
    format!("/renders/{}.png", doc.content_id())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        Self { status, body: json!({ "error": message.to_string(), "ok": false }) }
    }
    fn bad_request(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
    fn not_found(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
    fn invalid_layout(violations: Vec<Violation>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "layout is invalid", "ok": false, "violations": violations }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rej: JsonRejection) -> Self {
        ApiError::bad_request(rej.body_text())
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::InvalidLayout(v) => ApiError::invalid_layout(v),
            OrchestratorError::Backend { .. } => ApiError::new(StatusCode::BAD_GATEWAY, e),
            other => ApiError::bad_request(other),
        }
    }
}

/// Strict DSL parse plus validation, with structured 400 bodies.
fn parse_dsl(dsl: &str, classes: &Classes) -> Result<LayoutDoc, ApiError> {
    let doc = parse_layout_raw(dsl, &classes.registry).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        body: json!({
            "error": "design code does not parse",
            "ok": false,
            "violations": [],
            "parse_error": { "line": e.line, "message": e.kind.to_string() },
        }),
    })?;
    let report = validate_layout(&doc);
    if !report.ok {
        return Err(ApiError::invalid_layout(report.violations));
    }
    Ok(doc)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub prompt: String,
    pub s0_dsl: String,
    #[serde(default)]
    pub setup: Option<String>,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub token: String,
    pub rendered_png_url: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub token: String,
    pub backend: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub status: SessionStatus,
    pub echo_flagged: bool,
    pub state: SessionState,
}

impl From<ApiSession> for SessionView {
    fn from(s: ApiSession) -> Self {
        Self {
            status: s.state.status(),
            echo_flagged: s.state.echo_flagged_at.is_some(),
            token: s.token,
            backend: s.backend,
            created_at: s.created_at,
            updated_at: s.updated_at,
            state: s.state,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RoundView {
    pub round: RoundRecord,
    pub rendered_png_url: String,
    pub status: SessionStatus,
    pub echo_flagged_at: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct HumanEdit {
    pub dsl: String,
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(req) = body?;
    let setup_name = req.setup.as_deref().unwrap_or("single");
    let setup = ModelSetup::from_name(setup_name).ok_or_else(|| ApiError::bad_request(format!("unknown setup {setup_name}")))?;
    let backend = req.backend.unwrap_or_else(|| "heuristic".into());
    if !app.0.backends.contains_key(&backend) {
        return Err(ApiError::bad_request(format!("unknown backend {backend}")));
    }
    let s0 = parse_dsl(&req.s0_dsl, &app.0.classes)?;
    let defaults = ChainConfig::default();
    let config = ChainConfig {
        setup,
        temperature: req.temperature.unwrap_or(defaults.temperature),
        max_tokens: req.max_tokens.unwrap_or(defaults.max_tokens),
        ..defaults
    };
    config.prompt_options().decoding.validate().map_err(ApiError::bad_request)?;
    let token = uuid::Uuid::new_v4().simple().to_string();
    let state = SessionState::new(token.clone(), req.prompt, s0, config)?;
    let now = now_secs();
    let session = ApiSession { token: token.clone(), backend, created_at: now, updated_at: now, state };
    app.0.store.put(&session).map_err(ApiError::internal)?;
    app.register(&session.state.s0);
    let rendered_png_url = render_url(&session.state.s0);
    Ok((StatusCode::CREATED, Json(Created { token, rendered_png_url })))
}

enum RoundInput {
    SelfRevision,
    Human(LayoutDoc),
}

async fn run_round(app: &AppState, token: &str, input: RoundInput) -> Result<Json<RoundView>, ApiError> {
    let lock = app.session_lock(token);
    let _guard = lock.try_lock_owned().map_err(|_| ApiError::new(StatusCode::CONFLICT, "a round is already running for this session"))?;
    let ApiSession { token, backend: backend_name, created_at, state, .. } = app.load(token)?;
    let backend = app
        .0
        .backends
        .get(&backend_name)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_GATEWAY, format!("backend {backend_name} is not available")))?;
    let (state, outcome) = tokio::task::spawn_blocking(move || {
        let mut state = state;
        let outcome = match input {
            RoundInput::SelfRevision => state.self_revise(backend.as_ref()).map(|_| ()),
            RoundInput::Human(edit) => state.human_revise(backend.as_ref(), edit).map(|_| ()),
        };
        (state, outcome)
    })
    .await
    .map_err(ApiError::internal)?;
    outcome?;
    let session = ApiSession { token, backend: backend_name, created_at, updated_at: now_secs(), state };
    app.0.store.put(&session).map_err(ApiError::internal)?;
    app.index_session(&session.state);
    let round = session.state.rounds.last().cloned().expect("round recorded");
    Ok(Json(RoundView {
        rendered_png_url: render_url(round.output()),
        round,
        status: session.state.status(),
        echo_flagged_at: session.state.echo_flagged_at,
    }))
}

async fn self_round(State(app): State<AppState>, Path(token): Path<String>) -> Result<Json<RoundView>, ApiError> {
    run_round(&app, &token, RoundInput::SelfRevision).await
}

async fn human_edit(
    State(app): State<AppState>,
    Path(token): Path<String>,
    body: Result<Json<HumanEdit>, JsonRejection>,
) -> Result<Json<RoundView>, ApiError> {
    app.load(&token)?;
    let Json(req) = body?;
    let edit = parse_dsl(&req.dsl, &app.0.classes)?;
    run_round(&app, &token, RoundInput::Human(edit)).await
}

async fn get_session(State(app): State<AppState>, Path(token): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(app.load(&token)?.into()))
}

async fn get_render(State(app): State<AppState>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let id = file.strip_suffix(".png").ok_or_else(|| ApiError::not_found("renders are served as .png"))?;
    let png = app.png(id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response())
}

#[derive(Debug, Deserialize)]
pub struct FidQuery {
    pub a: String,
    pub b: String,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// `session:<token>` (round outputs), `corpus:<name>` (final states) or
/// `corpus:<name>:initial` (`S0` states).
fn population(app: &AppState, spec: &str) -> Result<Vec<LayoutDoc>, ApiError> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["session", token] => Ok(app.load(token)?.state.rounds.iter().map(|r| r.output().clone()).collect()),
        ["corpus", name, rest @ ..] if valid_name(name) => {
            let dir = app.0.corpus_dir.as_ref().ok_or_else(|| ApiError::not_found("no corpus directory configured"))?;
            let path = dir.join(format!("{name}.jsonl"));
            if !path.is_file() {
                return Err(ApiError::not_found(format!("unknown corpus {name}")));
            }
            let corpus = load_corpus(&path, &app.0.classes.registry, Split::Test).map_err(ApiError::internal)?;
            match rest {
                [] | ["final"] => Ok(corpus.finals()),
                ["initial"] => Ok(corpus.trajectories().iter().map(|t| t.initial().clone()).collect()),
                _ => Err(ApiError::bad_request(format!("unknown stage in {spec}"))),
            }
        }
        _ => Err(ApiError::bad_request(format!("unknown population {spec:?}"))),
    }
}

async fn metrics_fid(State(app): State<AppState>, Query(q): Query<FidQuery>) -> Result<Response, ApiError> {
    tokio::task::spawn_blocking(move || {
        let a = population(&app, &q.a)?;
        let b = population(&app, &q.b)?;
        let r = fid_layouts(&a, &b, &app.0.classes.registry, &EmbedConfig::default(), &FidConfig::default())
            .map_err(ApiError::bad_request)?;
        Ok(Json(r).into_response())
    })
    .await
    .map_err(ApiError::internal)?
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{token}", get(get_session))
        .route("/sessions/{token}/rounds", post(self_round))
        .route("/sessions/{token}/human-edit", post(human_edit))
        .route("/renders/{file}", get(get_render))
        .route("/metrics/fid", get(metrics_fid))
        .with_state(app)
}

/// Serves until ctrl-c, sweeping expired sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, app: AppState, sweep_every: Duration) -> std::io::Result<()> {
    let store = app.store().clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweep_every);
        loop {
            tick.tick().await;
            let store = store.clone();
            if let Ok(Ok(n)) = tokio::task::spawn_blocking(move || store.sweep()).await {
                if n > 0 {
                    tracing::info!(removed = n, "expired sessions swept");
                }
            }
        }
    });
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
