//! Game-record files: parsing, tolerant ingestion and canonical serialization.
//!
//! Format (UTF-8, LF): games separated by blank lines. Each game starts with
//! header lines `Id:`, `RedElo:`, `BlackElo:`, `Result:` followed by numbered
//! move pairs such as `1. C2=5 H8+7`. Move text is WXF-style or coordinate
//! text (`h3e3`: files a-i from Red's left, ranks 1-10 from Red's back rank).

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::movespace::{self, MoveToken, ResolveError, TokenError, TokenizeError};
use crate::rules::{initial_state, GameState, MoveAction, Square};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameResult {
    RedWins,
    BlackWins,
    Draw,
    Unknown,
}

impl GameResult {
    pub fn as_str(self) -> &'static str {
        match self {
            GameResult::RedWins => "1-0",
            GameResult::BlackWins => "0-1",
            GameResult::Draw => "1/2",
            GameResult::Unknown => "?",
        }
    }

    pub fn parse(s: &str) -> Option<GameResult> {
        Some(match s.trim() {
            "1-0" => GameResult::RedWins,
            "0-1" => GameResult::BlackWins,
            "1/2" | "1/2-1/2" => GameResult::Draw,
            "?" | "*" => GameResult::Unknown,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub source_id: String,
    pub red_elo: i32,
    pub black_elo: i32,
    pub result: GameResult,
    pub moves: Vec<MoveToken>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordFile {
    pub records: Vec<GameRecord>,
}

/// A record that was dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Zero-based position of the game block in the file.
    pub game: usize,
    pub id: Option<String>,
    /// One-based ply of the offending move, when the failure is a move.
    pub ply: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "game {}", self.game)?;
        if let Some(id) = &self.id {
            write!(f, " ({id})")?;
        }
        if let Some(ply) = self.ply {
            write!(f, " ply {ply}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotationError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("record file is not valid UTF-8 (byte {0})")]
    Framing(usize),
}

impl From<TokenError> for NotationError {
    fn from(e: TokenError) -> Self {
        match e {
            TokenError::Parse { offset, message } => NotationError::Parse { offset, message },
            TokenError::Malformed(message) => NotationError::Parse { offset: 0, message },
        }
    }
}

fn parse_coord_square(s: &str) -> Option<Square> {
    let mut chars = s.chars();
    let file = chars.next()?;
    if !('a'..='i').contains(&file) {
        return None;
    }
    let rank: u8 = chars.as_str().parse().ok()?;
    Square::new(file as u8 - b'a' + 1, rank)
}

/// Splits `h3e3` / `e10e9` into two squares.
pub fn parse_coord_action(text: &str) -> Option<MoveAction> {
    let text = text.trim();
    let second = text.char_indices().skip(1).find(|(_, c)| c.is_ascii_lowercase())?.0;
    let from = parse_coord_square(&text[..second])?;
    let to = parse_coord_square(&text[second..])?;
    (from != to).then(|| MoveAction::new(from, to))
}

fn looks_like_coord(text: &str) -> bool {
    text.chars().next().is_some_and(|c| c.is_ascii_lowercase())
}

/// Parses WXF-style or coordinate move text into a token legal in `state`.
pub fn parse_move_text(text: &str, state: &GameState) -> Result<MoveToken, NotationError> {
    parse_move(text, state).map(|(t, _)| t)
}

/// Like [`parse_move_text`], also returning the resolved board action.
pub fn parse_move(text: &str, state: &GameState) -> Result<(MoveToken, MoveAction), NotationError> {
    let text = text.trim();
    if looks_like_coord(text) {
        let action = parse_coord_action(text).ok_or_else(|| NotationError::Parse {
            offset: 0,
            message: format!("malformed coordinate move {text:?}"),
        })?;
        if !state.is_legal(action) {
            let geometric = state
                .piece_at(action.from)
                .filter(|p| p.side == state.side_to_move())
                .is_some_and(|_| state.pseudo_moves(state.side_to_move()).contains(&action));
            return Err(if geometric {
                ResolveError::LocallyIllegal(text.to_string())
            } else {
                ResolveError::Unresolvable(text.to_string())
            }
            .into());
        }
        let token = movespace::tokenize(action, state).map_err(|e| match e {
            TokenizeError::NotLegal(_) => ResolveError::Unresolvable(text.to_string()),
            TokenizeError::Untokenizable(_) => ResolveError::Ambiguous(text.to_string()),
        })?;
        return Ok((token, action));
    }
    let token: MoveToken = text.parse()?;
    let action = movespace::resolve(&token, state)?;
    Ok((token, action))
}

pub fn serialize_record(record: &GameRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Id: {}", record.source_id);
    let _ = writeln!(out, "RedElo: {}", record.red_elo);
    let _ = writeln!(out, "BlackElo: {}", record.black_elo);
    let _ = writeln!(out, "Result: {}", record.result.as_str());
    for (n, pair) in record.moves.chunks(2).enumerate() {
        let _ = write!(out, "{}. {}", n + 1, pair[0]);
        if let Some(reply) = pair.get(1) {
            let _ = write!(out, " {reply}");
        }
        out.push('\n');
    }
    out
}

pub fn serialize_record_file(records: &[GameRecord]) -> String {
    records.iter().map(serialize_record).collect::<Vec<_>>().join("\n")
}

struct Block<'a> {
    lines: Vec<&'a str>,
}

fn blocks(text: &str) -> Vec<Block<'_>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(Block { lines: std::mem::take(&mut cur) });
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(Block { lines: cur });
    }
    out
}

fn parse_block(block: &Block<'_>, game: usize) -> Result<GameRecord, Diagnostic> {
    let mut id = None;
    let mut red_elo = 0;
    let mut black_elo = 0;
    let mut result = GameResult::Unknown;
    let fail = |id: &Option<String>, ply: Option<usize>, message: String| Diagnostic {
        game,
        id: id.clone(),
        ply,
        message,
    };

    let mut move_texts = Vec::new();
    for line in &block.lines {
        if let Some((key, value)) = line.split_once(':') {
            let value = value.trim();
            match key.trim() {
                "Id" => id = Some(value.to_string()),
                "RedElo" => {
                    red_elo = value.parse().map_err(|_| fail(&id, None, format!("bad RedElo {value:?}")))?
                }
                "BlackElo" => {
                    black_elo = value.parse().map_err(|_| fail(&id, None, format!("bad BlackElo {value:?}")))?
                }
                "Result" => {
                    result = GameResult::parse(value).ok_or_else(|| fail(&id, None, format!("bad Result {value:?}")))?
                }
                other => return Err(fail(&id, None, format!("unknown header {other:?}"))),
            }
            continue;
        }
        for word in line.split_whitespace() {
            let is_number = word.strip_suffix('.').is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
            if !is_number {
                move_texts.push(word);
            }
        }
    }

    let mut state = initial_state();
    let mut moves = Vec::with_capacity(move_texts.len());
    for (i, text) in move_texts.iter().enumerate() {
        let (token, action) = parse_move(text, &state).map_err(|e| fail(&id, Some(i + 1), format!("{text}: {e}")))?;
        state = state.apply_move(action).expect("resolved moves are legal");
        moves.push(token);
    }
    Ok(GameRecord {
        source_id: id.unwrap_or_else(|| format!("game-{game}")),
        red_elo,
        black_elo,
        result,
        moves,
    })
}

/// Parses a record file. Games that fail to parse or replay are dropped and
/// reported; only undecodable bytes are fatal.
pub fn parse_record_file(bytes: &[u8]) -> Result<(RecordFile, Vec<Diagnostic>), NotationError> {
    let text = std::str::from_utf8(bytes).map_err(|e| NotationError::Framing(e.valid_up_to()))?;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (game, block) in blocks(text).iter().enumerate() {
        match parse_block(block, game) {
            Ok(r) => records.push(r),
            Err(d) => diagnostics.push(d),
        }
    }
    Ok((RecordFile { records }, diagnostics))
}
