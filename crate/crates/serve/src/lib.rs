//! HTTP + JSON service for playing against trained models and inspecting
//! their move distributions.
//!
//! Routes: `GET /models`, `POST /sessions`, `GET /sessions/{id}`,
//! `POST /sessions/{id}/moves`, `POST /analyze`. Errors are
//! `{code, message, detail}` with a matching HTTP status.

pub mod registry;
pub mod session;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use xqmimic_core::eval::{top_k_correct, top_p_correct};
use xqmimic_core::movespace::resolve;
use xqmimic_core::notation::parse_move;
use xqmimic_core::rules::initial_state;
use xqmimic_core::{GameState, MoveToken, MoveVocabulary, Side};

pub use registry::{ModelDescriptor, Registry};
pub use session::{HumanSide, PlayError, ReplyPolicy, Session, SessionStore, Status};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), detail: Value::Null }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message, "detail": self.detail}))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", r.body_text())
    }
}

pub struct AppState {
    vocab: &'static MoveVocabulary,
    registry: Registry,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    store: Option<SessionStore>,
}

impl AppState {
    /// Sessions found in `store` are restored; the broken ones are returned.
    pub fn new(registry: Registry, store: Option<SessionStore>) -> std::io::Result<(Arc<AppState>, Vec<String>)> {
        let mut sessions = HashMap::new();
        let mut broken = Vec::new();
        if let Some(store) = &store {
            let (restored, bad) = store.restore()?;
            for s in restored {
                sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
            }
            broken.extend(bad.into_iter().map(|(p, e)| format!("{}: {e}", p.display())));
        }
        let state = AppState { vocab: MoveVocabulary::standard(), registry, sessions: Mutex::new(sessions), store };
        Ok((Arc::new(state), broken))
    }

    /// Registers a session built outside the API.
    pub fn insert_session(&self, session: Session) -> std::io::Result<()> {
        if let Some(store) = &self.store {
            store.created(&session)?;
        }
        self.sessions.lock().unwrap().insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    fn model(&self, id: &str) -> Result<Arc<xqmimic_core::model::Model>, ApiError> {
        self.registry
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownModel", format!("no loadable model {id:?}")))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id:?}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/moves", post(play_move))
        .route("/analyze", post(analyze))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveView {
    pub wxf: String,
    pub coord: String,
}

fn move_view(token: &MoveToken, state: &GameState) -> MoveView {
    MoveView { wxf: token.to_string(), coord: resolve(token, state).map(|a| a.coord()).unwrap_or_default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub model_id: String,
    pub human_side: HumanSide,
    pub policy: ReplyPolicy,
    pub status: Status,
    pub to_move: String,
    pub history: Vec<MoveView>,
}

fn side_name(side: Side) -> String {
    match side {
        Side::Red => "red".into(),
        Side::Black => "black".into(),
    }
}

fn session_view(s: &Session) -> SessionView {
    let coords = s.coord_history();
    SessionView {
        session_id: s.id.clone(),
        model_id: s.model_id.clone(),
        human_side: s.human_side,
        policy: s.policy,
        status: s.status(),
        to_move: side_name(s.state().side_to_move()),
        history: s.history.iter().zip(coords).map(|(t, coord)| MoveView { wxf: t.to_string(), coord }).collect(),
    }
}

fn legal_moves(state: &GameState, vocab: &MoveVocabulary) -> Vec<MoveView> {
    vocab.legal_indices(state).into_iter().map(|i| move_view(&vocab.decode(i).unwrap(), state)).collect()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn list_models(State(app): State<Arc<AppState>>) -> Json<Vec<ModelDescriptor>> {
    Json(app.registry.descriptors().to_vec())
}

#[derive(Deserialize)]
struct CreateSession {
    model_id: String,
    human_side: HumanSide,
    #[serde(default = "default_policy")]
    policy: ReplyPolicy,
    seed: Option<u64>,
}

fn default_policy() -> ReplyPolicy {
    ReplyPolicy::Argmax
}

fn new_session_id() -> String {
    format!("{:016x}{:016x}", rand::random::<u64>(), rand::random::<u64>())
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    let model = app.model(&req.model_id)?;
    let seed = req.seed.unwrap_or_else(rand::random);
    let app2 = app.clone();
    let session = blocking(move || {
        let mut s = Session::new(new_session_id(), req.model_id, req.human_side, req.policy, seed);
        s.model_reply(&model, app2.vocab).map_err(ApiError::internal)?;
        Ok(s)
    })
    .await?;
    if let Some(store) = &app.store {
        store.created(&session).map_err(ApiError::internal)?;
    }
    let view = session_view(&session);
    app.sessions.lock().unwrap().insert(session.id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let s = app.session(&id)?;
    let view = session_view(&s.lock().unwrap());
    Ok(Json(view))
}

#[derive(Deserialize)]
struct PlayRequest {
    #[serde(rename = "move")]
    text: String,
    /// Include the model's top-10 filtered distribution for its reply.
    #[serde(default)]
    distribution: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Probability {
    pub wxf: String,
    pub coord: String,
    pub prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlayResponse {
    #[serde(flatten)]
    pub session: SessionView,
    pub reply: Option<MoveView>,
    /// Moves available to the human now (empty once the game is over).
    pub legal_moves: Vec<MoveView>,
    pub distribution: Option<Vec<Probability>>,
}

fn play_error(e: PlayError, state: &GameState, vocab: &MoveVocabulary) -> ApiError {
    let message = e.to_string();
    match e {
        PlayError::Parse(_) => ApiError::new(StatusCode::BAD_REQUEST, "ParseError", message),
        PlayError::IllegalMove(_) | PlayError::Unrepresentable(_) => {
            let code = if matches!(e, PlayError::IllegalMove(_)) { "IllegalMove" } else { "UnrepresentableMove" };
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
                .with_detail(json!({"legal_moves": legal_moves(state, vocab)}))
        }
        PlayError::NotYourTurn => ApiError::new(StatusCode::CONFLICT, "NotYourTurn", message),
        PlayError::SessionFinished => ApiError::new(StatusCode::CONFLICT, "SessionFinished", message),
        PlayError::Model(_) => ApiError::internal(message),
    }
}

fn top_moves(probs: &[f64], state: &GameState, vocab: &MoveVocabulary, n: usize) -> Vec<Probability> {
    let ranked = xqmimic_core::model::ranking(probs);
    ranked
        .into_iter()
        .filter(|&i| probs[i] > 0.0)
        .take(n)
        .map(|i| {
            let v = move_view(&vocab.decode(i).unwrap(), state);
            Probability { wxf: v.wxf, coord: v.coord, prob: probs[i] }
        })
        .collect()
}

async fn play_move(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<PlayRequest>, JsonRejection>,
) -> Result<Json<PlayResponse>, ApiError> {
    let Json(req) = body?;
    let handle = app.session(&id)?;
    let app2 = app.clone();
    let response = blocking(move || {
        let mut s = handle.lock().unwrap();
        let model = app2.model(&s.model_id)?;
        let before = s.history.len();
        let reply = s.play(&req.text, &model, app2.vocab).map_err(|e| play_error(e, &s.state(), app2.vocab))?;
        if let Some(store) = &app2.store {
            store.moves(&s.id, &s.history[before..]).map_err(ApiError::internal)?;
        }
        let (reply_view, distribution) = match reply {
            Some(token) => {
                let positions = xqmimic_core::rules::replay_positions(&s.history).map_err(ApiError::internal)?;
                let at = &positions[s.history.len() - 1];
                let distribution = if req.distribution {
                    let dist = model.analyze(&s.history[..s.history.len() - 1], at, app2.vocab).map_err(ApiError::internal)?;
                    Some(top_moves(&dist.probs, at, app2.vocab, 10))
                } else {
                    None
                };
                (Some(move_view(&token, at)), distribution)
            }
            None => (None, None),
        };
        let state = s.state();
        let legal = if s.status() == Status::Ongoing && s.humans_turn() { legal_moves(&state, app2.vocab) } else { Vec::new() };
        Ok(PlayResponse { session: session_view(&s), reply: reply_view, legal_moves: legal, distribution })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Deserialize)]
struct AnalyzeRequest {
    model_id: String,
    #[serde(default)]
    history: Vec<String>,
    actual: Option<String>,
    ks: Option<Vec<usize>>,
    ps: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActualMove {
    pub wxf: String,
    pub probability: f64,
    /// Zero-based rank by descending probability.
    pub rank: usize,
    pub top1: bool,
    pub top_k: Vec<(usize, bool)>,
    pub top_p: Vec<(f64, bool)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub to_move: String,
    /// Legal moves by descending probability.
    pub distribution: Vec<Probability>,
    pub total: f64,
    pub actual: Option<ActualMove>,
}

fn replay_texts(texts: &[String]) -> Result<(Vec<MoveToken>, GameState), ApiError> {
    let mut state = initial_state();
    let mut tokens = Vec::new();
    for (index, text) in texts.iter().enumerate() {
        let (token, action) = parse_move(text, &state).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "IllegalSequence", format!("move {index} ({text:?}): {e}"))
                .with_detail(json!({"index": index}))
        })?;
        state = state.apply_move(action).map_err(ApiError::internal)?;
        tokens.push(token);
    }
    Ok((tokens, state))
}

async fn analyze(
    State(app): State<Arc<AppState>>,
    body: Result<Json<AnalyzeRequest>, JsonRejection>,
) -> Result<Json<AnalyzeResponse>, ApiError> {
    let Json(req) = body?;
    let model = app.model(&req.model_id)?;
    let vocab = app.vocab;
    let response = blocking(move || {
        let (tokens, state) = replay_texts(&req.history)?;
        let dist = model.analyze(&tokens, &state, vocab).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "NoLegalMove", e.to_string())
        })?;
        let actual = match &req.actual {
            None => None,
            Some(text) => {
                let (token, _) = parse_move(text, &state).map_err(|e| {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "IllegalMove", format!("actual move {text:?}: {e}"))
                })?;
                let y = vocab.encode(&token).map_err(|e| {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnrepresentableMove", e.to_string())
                })?;
                let ks = req.ks.clone().unwrap_or_else(|| vec![1, 3, 5, 10]);
                let ps = req.ps.clone().unwrap_or_else(|| vec![0.0, 0.5, 0.9]);
                let rank = xqmimic_core::model::ranking(&dist.probs).iter().position(|&i| i == y).unwrap();
                Some(ActualMove {
                    wxf: token.to_string(),
                    probability: dist.probs[y],
                    rank,
                    top1: dist.argmax() == y,
                    top_k: ks.iter().map(|&k| (k, top_k_correct(&dist.probs, y, k))).collect(),
                    top_p: ps.iter().map(|&p| (p, top_p_correct(&dist.probs, y, p))).collect(),
                })
            }
        };
        let mask = vocab.locally_legal_mask(&state);
        let distribution: Vec<Probability> = xqmimic_core::model::ranking(&dist.probs)
            .into_iter()
            .filter(|&i| mask[i])
            .map(|i| {
                let v = move_view(&vocab.decode(i).unwrap(), &state);
                Probability { wxf: v.wxf, coord: v.coord, prob: dist.probs[i] }
            })
            .collect();
        Ok(AnalyzeResponse {
            to_move: side_name(state.side_to_move()),
            total: dist.probs.iter().sum(),
            distribution,
            actual,
        })
    })
    .await?;
    Ok(Json(response))
}
