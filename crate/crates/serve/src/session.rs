//! Game sessions between a human and a model.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xqmimic_core::model::{Model, ModelError, Policy};
use xqmimic_core::movespace::{resolve, ResolveError};
use xqmimic_core::notation::{parse_move, NotationError};
use xqmimic_core::rules::{replay, replay_positions, Outcome};
use xqmimic_core::{GameState, MoveToken, MoveVocabulary, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanSide {
    Red,
    Black,
}

impl HumanSide {
    pub fn side(self) -> Side {
        match self {
            HumanSide::Red => Side::Red,
            HumanSide::Black => Side::Black,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplyPolicy {
    Argmax,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Ongoing,
    HumanWins,
    ModelWins,
}

#[derive(Debug, thiserror::Error)]
pub enum PlayError {
    #[error("cannot parse move {0:?}")]
    Parse(String),
    #[error("{0} is not legal here")]
    IllegalMove(String),
    #[error("{0} is legal but has no token in the move vocabulary")]
    Unrepresentable(String),
    #[error("it is not the human's turn")]
    NotYourTurn,
    #[error("the game is over")]
    SessionFinished,
    #[error("model failed: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub model_id: String,
    pub human_side: HumanSide,
    pub policy: ReplyPolicy,
    pub seed: u64,
    pub history: Vec<MoveToken>,
    #[serde(skip)]
    state: Option<GameState>,
}

/// Per-reply sampling seed; a transcript replays move for move.
fn reply_seed(seed: u64, ply: usize) -> u64 {
    seed ^ (ply as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl Session {
    pub fn new(id: String, model_id: String, human_side: HumanSide, policy: ReplyPolicy, seed: u64) -> Self {
        Session { id, model_id, human_side, policy, seed, history: Vec::new(), state: Some(replay(&[]).unwrap()) }
    }

    /// A session resumed from a recorded history.
    pub fn from_history(
        id: String,
        model_id: String,
        human_side: HumanSide,
        policy: ReplyPolicy,
        seed: u64,
        history: Vec<MoveToken>,
    ) -> Result<Self, xqmimic_core::rules::RulesError> {
        let state = replay(&history)?;
        Ok(Session { id, model_id, human_side, policy, seed, history, state: Some(state) })
    }

    pub fn state(&self) -> GameState {
        self.state.clone().unwrap_or_else(|| replay(&self.history).expect("session history replays"))
    }

    pub fn status(&self) -> Status {
        let winner = match self.state().outcome() {
            Outcome::Ongoing => return Status::Ongoing,
            Outcome::RedWins => Side::Red,
            Outcome::BlackWins => Side::Black,
        };
        if winner == self.human_side.side() {
            Status::HumanWins
        } else {
            Status::ModelWins
        }
    }

    pub fn humans_turn(&self) -> bool {
        self.state().side_to_move() == self.human_side.side()
    }

    /// Appends a move already known to be legal.
    fn push(&mut self, token: MoveToken, state: GameState) {
        self.history.push(token);
        self.state = Some(state);
    }

    /// Has the model play if it is its turn and the game is on.
    pub fn model_reply(&mut self, model: &Model, vocab: &MoveVocabulary) -> Result<Option<MoveToken>, PlayError> {
        if self.status() != Status::Ongoing || self.humans_turn() {
            return Ok(None);
        }
        let state = self.state();
        let policy = match self.policy {
            ReplyPolicy::Argmax => Policy::Argmax,
            ReplyPolicy::Sample => Policy::Sample { seed: reply_seed(self.seed, self.history.len()) },
        };
        let token = model.predict(&self.history, &state, vocab, policy)?;
        let action = resolve(&token, &state).expect("filtered replies are locally legal");
        let next = state.apply_move(action).expect("resolved replies are legal");
        self.push(token, next);
        Ok(Some(token))
    }

    /// Applies a human move and the model's answer. On error the session
    /// is unchanged.
    pub fn play(&mut self, text: &str, model: &Model, vocab: &MoveVocabulary) -> Result<Option<MoveToken>, PlayError> {
        if self.status() != Status::Ongoing {
            return Err(PlayError::SessionFinished);
        }
        if !self.humans_turn() {
            return Err(PlayError::NotYourTurn);
        }
        let state = self.state();
        let coordinate = text.trim().starts_with(|c: char| c.is_ascii_lowercase());
        let (token, action) = parse_move(text, &state).map_err(|e| match e {
            NotationError::Resolve(ResolveError::Ambiguous(_)) if coordinate => PlayError::Unrepresentable(text.to_string()),
            NotationError::Resolve(_) => PlayError::IllegalMove(text.to_string()),
            _ => PlayError::Parse(text.to_string()),
        })?;
        if vocab.encode(&token).is_err() {
            return Err(PlayError::Unrepresentable(text.to_string()));
        }
        let next = state.apply_move(action).map_err(|_| PlayError::IllegalMove(text.to_string()))?;
        let before = self.clone();
        self.push(token, next);
        match self.model_reply(model, vocab) {
            Ok(reply) => Ok(reply),
            Err(e) => {
                *self = before;
                Err(e)
            }
        }
    }

    /// Coordinate text of every move, e.g. `h3e3`.
    pub fn coord_history(&self) -> Vec<String> {
        let states = replay_positions(&self.history).expect("session history replays");
        self.history.iter().zip(&states).map(|(t, s)| resolve(t, s).unwrap().coord()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogLine {
    Created { id: String, model_id: String, human_side: HumanSide, policy: ReplyPolicy, seed: u64 },
    Move { token: String },
}

/// Append-only per-session logs in one directory.
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: &Path) -> std::io::Result<SessionStore> {
        std::fs::create_dir_all(dir)?;
        Ok(SessionStore { dir: dir.to_path_buf() })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn append(&self, id: &str, lines: &[LogLine]) -> std::io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(id))?;
        for l in lines {
            writeln!(f, "{}", serde_json::to_string(l).unwrap())?;
        }
        f.sync_data()
    }

    pub fn created(&self, s: &Session) -> std::io::Result<()> {
        let mut lines = vec![LogLine::Created {
            id: s.id.clone(),
            model_id: s.model_id.clone(),
            human_side: s.human_side,
            policy: s.policy,
            seed: s.seed,
        }];
        lines.extend(s.history.iter().map(|t| LogLine::Move { token: t.to_string() }));
        self.append(&s.id, &lines)
    }

    pub fn moves(&self, id: &str, tokens: &[MoveToken]) -> std::io::Result<()> {
        let lines: Vec<LogLine> = tokens.iter().map(|t| LogLine::Move { token: t.to_string() }).collect();
        self.append(id, &lines)
    }

    /// Rebuilds every logged session; logs that fail to replay are skipped
    /// and returned with the reason.
    pub fn restore(&self) -> std::io::Result<(Vec<Session>, Vec<(PathBuf, String)>)> {
        let mut sessions = Vec::new();
        let mut broken = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match Self::read_log(&path) {
                Ok(s) => sessions.push(s),
                Err(e) => broken.push((path, e)),
            }
        }
        Ok((sessions, broken))
    }

    fn read_log(path: &Path) -> Result<Session, String> {
        let f = File::open(path).map_err(|e| e.to_string())?;
        let mut session: Option<Session> = None;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line).map_err(|e| e.to_string())? {
                LogLine::Created { id, model_id, human_side, policy, seed } => {
                    session = Some(Session::new(id, model_id, human_side, policy, seed));
                }
                LogLine::Move { token } => {
                    let s = session.as_mut().ok_or("move before creation")?;
                    let token: MoveToken = token.parse().map_err(|e: xqmimic_core::movespace::TokenError| e.to_string())?;
                    let state = s.state();
                    let action = resolve(&token, &state).map_err(|e| e.to_string())?;
                    let next = state.apply_move(action).map_err(|e| e.to_string())?;
                    s.push(token, next);
                }
            }
        }
        session.ok_or_else(|| "empty log".into())
    }
}
