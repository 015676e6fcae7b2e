//! Xiangqi board state, movement rules and legality.
//!
//! Coordinates are fixed from Red's point of view: files 1..=9 left to right,
//! ranks 1..=10 starting at Red's back rank. Every notation is mapped into
//! this frame before it reaches the engine.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::movespace::{self, MoveToken, ResolveError};

pub const FILES: u8 = 9;
pub const RANKS: u8 = 10;
pub const SQUARES: usize = 90;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RulesError {
    #[error("illegal move {0}")]
    IllegalMove(MoveAction),
    #[error("illegal token at index {index}: {source}")]
    IllegalSequence {
        index: usize,
        #[source]
        source: ResolveError,
    },
    #[error("bad board text: {0}")]
    BoardText(String),
    #[error("invalid position: {0}")]
    InvalidPosition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Red,
    Black,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::Red => Side::Black,
            Side::Black => Side::Red,
        }
    }

    /// Rank delta of one step "forward" for this side.
    pub fn forward(self) -> i8 {
        match self {
            Side::Red => 1,
            Side::Black => -1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Red => f.write_str("red"),
            Side::Black => f.write_str("black"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PieceKind {
    General,
    Advisor,
    Elephant,
    Horse,
    Chariot,
    Cannon,
    Soldier,
}

impl PieceKind {
    pub const ALL: [PieceKind; 7] = [
        PieceKind::General,
        PieceKind::Advisor,
        PieceKind::Elephant,
        PieceKind::Horse,
        PieceKind::Chariot,
        PieceKind::Cannon,
        PieceKind::Soldier,
    ];

    /// Number of pieces of this kind each side starts with.
    pub fn initial_count(self) -> usize {
        match self {
            PieceKind::General => 1,
            PieceKind::Soldier => 5,
            _ => 2,
        }
    }

    /// WXF letter, used both for notation and the debug board glyphs.
    pub fn letter(self) -> char {
        match self {
            PieceKind::General => 'K',
            PieceKind::Advisor => 'A',
            PieceKind::Elephant => 'E',
            PieceKind::Horse => 'H',
            PieceKind::Chariot => 'R',
            PieceKind::Cannon => 'C',
            PieceKind::Soldier => 'P',
        }
    }

    /// Accepts the canonical letter plus the common aliases (G, B, N, S).
    pub fn from_letter(c: char) -> Option<PieceKind> {
        Some(match c.to_ascii_uppercase() {
            'K' | 'G' => PieceKind::General,
            'A' => PieceKind::Advisor,
            'E' | 'B' => PieceKind::Elephant,
            'H' | 'N' => PieceKind::Horse,
            'R' => PieceKind::Chariot,
            'C' => PieceKind::Cannon,
            'P' | 'S' => PieceKind::Soldier,
            _ => return None,
        })
    }

    /// Pieces that always change file when they move (never Traverse, arguments are files).
    pub fn moves_diagonally(self) -> bool {
        matches!(self, PieceKind::Advisor | PieceKind::Elephant | PieceKind::Horse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Piece {
    pub side: Side,
    pub kind: PieceKind,
}

impl Piece {
    pub const fn new(side: Side, kind: PieceKind) -> Self {
        Piece { side, kind }
    }

    pub fn glyph(self) -> char {
        let c = self.kind.letter();
        match self.side {
            Side::Red => c,
            Side::Black => c.to_ascii_lowercase(),
        }
    }

    pub fn from_glyph(c: char) -> Option<Piece> {
        let kind = PieceKind::from_letter(c)?;
        let side = if c.is_ascii_uppercase() { Side::Red } else { Side::Black };
        Some(Piece { side, kind })
    }
}

/// A board intersection. Always within 1..=9 × 1..=10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Square {
    file: u8,
    rank: u8,
}

impl Square {
    pub fn new(file: u8, rank: u8) -> Option<Square> {
        if (1..=FILES).contains(&file) && (1..=RANKS).contains(&rank) {
            Some(Square { file, rank })
        } else {
            None
        }
    }

    pub fn file(self) -> u8 {
        self.file
    }

    pub fn rank(self) -> u8 {
        self.rank
    }

    pub fn index(self) -> usize {
        (self.rank as usize - 1) * FILES as usize + (self.file as usize - 1)
    }

    pub fn from_index(index: usize) -> Square {
        debug_assert!(index < SQUARES);
        Square {
            file: (index % FILES as usize) as u8 + 1,
            rank: (index / FILES as usize) as u8 + 1,
        }
    }

    pub fn offset(self, df: i8, dr: i8) -> Option<Square> {
        let file = self.file as i8 + df;
        let rank = self.rank as i8 + dr;
        if file < 1 || rank < 1 {
            return None;
        }
        Square::new(file as u8, rank as u8)
    }

    pub fn all() -> impl Iterator<Item = Square> {
        (0..SQUARES).map(Square::from_index)
    }

    /// True when the square is on `side`'s half of the board.
    pub fn on_own_half(self, side: Side) -> bool {
        match side {
            Side::Red => self.rank <= 5,
            Side::Black => self.rank >= 6,
        }
    }

    pub fn in_palace(self, side: Side) -> bool {
        (4..=6).contains(&self.file)
            && match side {
                Side::Red => self.rank <= 3,
                Side::Black => self.rank >= 8,
            }
    }

    /// Coordinate text: file letter a..i, then the rank number 1..10.
    pub fn coord(self) -> String {
        format!("{}{}", (b'a' + self.file - 1) as char, self.rank)
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.file, self.rank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoveAction {
    pub from: Square,
    pub to: Square,
}

impl MoveAction {
    pub fn new(from: Square, to: Square) -> Self {
        debug_assert_ne!(from, to);
        MoveAction { from, to }
    }

    pub fn coord(self) -> String {
        format!("{}{}", self.from.coord(), self.to.coord())
    }
}

impl fmt::Display for MoveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    RedWins,
    BlackWins,
}

impl Outcome {
    pub fn winner(self) -> Option<Side> {
        match self {
            Outcome::Ongoing => None,
            Outcome::RedWins => Some(Side::Red),
            Outcome::BlackWins => Some(Side::Black),
        }
    }
}

const ORTHOGONAL: [(i8, i8); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];
const DIAGONAL: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
/// Horse destinations paired with the leg offset that must be empty.
const HORSE: [((i8, i8), (i8, i8)); 8] = [
    ((1, 2), (0, 1)),
    ((-1, 2), (0, 1)),
    ((1, -2), (0, -1)),
    ((-1, -2), (0, -1)),
    ((2, 1), (1, 0)),
    ((2, -1), (1, 0)),
    ((-2, 1), (-1, 0)),
    ((-2, -1), (-1, 0)),
];

/// Immutable-by-convention position: `apply_move` returns a fresh state.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GameState {
    board: [Option<Piece>; SQUARES],
    side_to_move: Side,
    ply: u32,
}

impl fmt::Debug for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GameState(ply {}, {} to move)", self.ply, self.side_to_move)?;
        f.write_str(&self.board_text())
    }
}

impl Default for GameState {
    fn default() -> Self {
        initial_state()
    }
}

pub fn initial_state() -> GameState {
    GameState::from_board_text(
        "rheakaehr\n\
         .........\n\
         .c.....c.\n\
         p.p.p.p.p\n\
         .........\n\
         .........\n\
         P.P.P.P.P\n\
         .C.....C.\n\
         .........\n\
         RHEAKAEHR",
        Side::Red,
    )
    .expect("initial layout is valid")
}

impl GameState {
    /// Parses the debug serialization: 10 rows of 9 glyphs, rank 10 first.
    /// The ply counter is set to 0 or 1 to match `side_to_move`.
    pub fn from_board_text(text: &str, side_to_move: Side) -> Result<GameState, RulesError> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.len() != RANKS as usize {
            return Err(RulesError::BoardText(format!("expected 10 rows, got {}", rows.len())));
        }
        let mut board = [None; SQUARES];
        for (row, line) in rows.iter().enumerate() {
            let rank = RANKS - row as u8;
            let glyphs: Vec<char> = line.chars().collect();
            if glyphs.len() != FILES as usize {
                return Err(RulesError::BoardText(format!("rank {rank} has {} glyphs", glyphs.len())));
            }
            for (col, &c) in glyphs.iter().enumerate() {
                if c == '.' {
                    continue;
                }
                let piece = Piece::from_glyph(c)
                    .ok_or_else(|| RulesError::BoardText(format!("unknown glyph {c:?}")))?;
                board[Square { file: col as u8 + 1, rank }.index()] = Some(piece);
            }
        }
        let state = GameState {
            board,
            side_to_move,
            ply: match side_to_move {
                Side::Red => 0,
                Side::Black => 1,
            },
        };
        state.check_invariants().map_err(RulesError::InvalidPosition)?;
        Ok(state)
    }

    pub fn board_text(&self) -> String {
        let mut out = String::with_capacity(100);
        for rank in (1..=RANKS).rev() {
            for file in 1..=FILES {
                out.push(self.board[Square { file, rank }.index()].map_or('.', Piece::glyph));
            }
            out.push('\n');
        }
        out
    }

    pub fn side_to_move(&self) -> Side {
        self.side_to_move
    }

    pub fn ply(&self) -> u32 {
        self.ply
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        self.board[sq.index()]
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Square, Piece)> + '_ {
        self.board
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (Square::from_index(i), p)))
    }

    pub fn piece_count(&self) -> usize {
        self.board.iter().filter(|p| p.is_some()).count()
    }

    pub fn general(&self, side: Side) -> Option<Square> {
        let target = Some(Piece::new(side, PieceKind::General));
        self.board.iter().position(|p| *p == target).map(Square::from_index)
    }

    /// Verifies every structural invariant of a reachable position.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut counts = [[0usize; 7]; 2];
        for (sq, piece) in self.pieces() {
            counts[piece.side.index()][piece.kind as usize] += 1;
            let side = piece.side;
            let ok = match piece.kind {
                PieceKind::General => sq.in_palace(side),
                PieceKind::Advisor => sq.in_palace(side) && (sq.file + sq.rank) % 2 == advisor_parity(side),
                PieceKind::Elephant => elephant_point(side, sq),
                PieceKind::Soldier => soldier_point(side, sq),
                _ => true,
            };
            if !ok {
                return Err(format!("{:?} {:?} cannot stand on {sq}", side, piece.kind));
            }
        }
        for side in [Side::Red, Side::Black] {
            for kind in PieceKind::ALL {
                let n = counts[side.index()][kind as usize];
                if n > kind.initial_count() {
                    return Err(format!("{side} has {n} pieces of kind {kind:?}"));
                }
            }
            if counts[side.index()][PieceKind::General as usize] != 1 {
                return Err(format!("{side} must have exactly one general"));
            }
        }
        if self.generals_facing() {
            return Err("generals face each other on an open file".into());
        }
        let expected = if self.ply % 2 == 0 { Side::Red } else { Side::Black };
        if expected != self.side_to_move {
            return Err("side to move disagrees with ply parity".into());
        }
        Ok(())
    }

    fn generals_facing(&self) -> bool {
        let (Some(red), Some(black)) = (self.general(Side::Red), self.general(Side::Black)) else {
            return false;
        };
        red.file == black.file
            && (red.rank + 1..black.rank).all(|r| self.board[Square { file: red.file, rank: r }.index()].is_none())
    }

    /// Moves obeying geometry and occupancy for `side`, ignoring own-general safety.
    pub fn pseudo_moves(&self, side: Side) -> Vec<MoveAction> {
        let mut out = Vec::with_capacity(64);
        for (from, piece) in self.pieces() {
            if piece.side == side {
                self.piece_moves(from, piece, &mut out);
            }
        }
        out
    }

    fn push_if_enterable(&self, side: Side, from: Square, to: Square, out: &mut Vec<MoveAction>) {
        match self.board[to.index()] {
            Some(p) if p.side == side => {}
            _ => out.push(MoveAction { from, to }),
        }
    }

    pub(crate) fn piece_moves(&self, from: Square, piece: Piece, out: &mut Vec<MoveAction>) {
        let side = piece.side;
        match piece.kind {
            PieceKind::General => {
                for (df, dr) in ORTHOGONAL {
                    if let Some(to) = from.offset(df, dr).filter(|s| s.in_palace(side)) {
                        self.push_if_enterable(side, from, to, out);
                    }
                }
            }
            PieceKind::Advisor => {
                for (df, dr) in DIAGONAL {
                    if let Some(to) = from.offset(df, dr).filter(|s| s.in_palace(side)) {
                        self.push_if_enterable(side, from, to, out);
                    }
                }
            }
            PieceKind::Elephant => {
                for (df, dr) in DIAGONAL {
                    let Some(to) = from.offset(2 * df, 2 * dr) else { continue };
                    if !to.on_own_half(side) {
                        continue;
                    }
                    let eye = from.offset(df, dr).expect("between two board squares");
                    if self.board[eye.index()].is_none() {
                        self.push_if_enterable(side, from, to, out);
                    }
                }
            }
            PieceKind::Horse => {
                for ((df, dr), (lf, lr)) in HORSE {
                    let Some(to) = from.offset(df, dr) else { continue };
                    let leg = from.offset(lf, lr).expect("between two board squares");
                    if self.board[leg.index()].is_none() {
                        self.push_if_enterable(side, from, to, out);
                    }
                }
            }
            PieceKind::Chariot => {
                for (df, dr) in ORTHOGONAL {
                    let mut cur = from;
                    while let Some(to) = cur.offset(df, dr) {
                        match self.board[to.index()] {
                            None => out.push(MoveAction { from, to }),
                            Some(p) => {
                                if p.side != side {
                                    out.push(MoveAction { from, to });
                                }
                                break;
                            }
                        }
                        cur = to;
                    }
                }
            }
            PieceKind::Cannon => {
                for (df, dr) in ORTHOGONAL {
                    let mut cur = from;
                    let mut screened = false;
                    while let Some(to) = cur.offset(df, dr) {
                        let occupant = self.board[to.index()];
                        if !screened {
                            match occupant {
                                None => out.push(MoveAction { from, to }),
                                Some(_) => screened = true,
                            }
                        } else if let Some(p) = occupant {
                            if p.side != side {
                                out.push(MoveAction { from, to });
                            }
                            break;
                        }
                        cur = to;
                    }
                }
            }
            PieceKind::Soldier => {
                if let Some(to) = from.offset(0, side.forward()) {
                    self.push_if_enterable(side, from, to, out);
                }
                if !from.on_own_half(side) {
                    for df in [-1, 1] {
                        if let Some(to) = from.offset(df, 0) {
                            self.push_if_enterable(side, from, to, out);
                        }
                    }
                }
            }
        }
    }

    /// Whether `side`'s general is attacked or faces the enemy general.
    pub fn in_check(&self, side: Side) -> bool {
        let Some(king) = self.general(side) else { return false };
        let enemy = side.opponent();

        // Chariot, cannon and facing general along the four lines.
        for (df, dr) in ORTHOGONAL {
            let mut cur = king;
            let mut seen = 0;
            while let Some(sq) = cur.offset(df, dr) {
                if let Some(p) = self.board[sq.index()] {
                    if seen == 0 {
                        if p.side == enemy
                            && (p.kind == PieceKind::Chariot || (p.kind == PieceKind::General && df == 0))
                        {
                            return true;
                        }
                    } else if p.side == enemy && p.kind == PieceKind::Cannon {
                        return true;
                    }
                    seen += 1;
                    if seen == 2 {
                        break;
                    }
                }
                cur = sq;
            }
        }

        // Horses: the leg sits diagonally adjacent to the horse, next to the general.
        for ((df, dr), _) in HORSE {
            let Some(sq) = king.offset(df, dr) else { continue };
            if self.board[sq.index()] != Some(Piece::new(enemy, PieceKind::Horse)) {
                continue;
            }
            // Leg of a horse at `sq` moving by (-df, -dr) onto the general.
            let (lf, lr) = if df.abs() == 2 { (-df.signum(), 0) } else { (0, -dr.signum()) };
            let leg = sq.offset(lf, lr).expect("on board");
            if self.board[leg.index()].is_none() {
                return true;
            }
        }

        // Soldiers: in front of the general (from the enemy's view) or beside it.
        let soldier = Some(Piece::new(enemy, PieceKind::Soldier));
        if king.offset(0, side.forward()).is_some_and(|s| self.board[s.index()] == soldier) {
            return true;
        }
        for df in [-1, 1] {
            if king.offset(df, 0).is_some_and(|s| self.board[s.index()] == soldier) {
                return true;
            }
        }
        false
    }

    /// Applies `action` without any legality test.
    pub(crate) fn apply_unchecked(&self, action: MoveAction) -> GameState {
        let mut next = self.clone();
        next.board[action.to.index()] = next.board[action.from.index()].take();
        next.side_to_move = self.side_to_move.opponent();
        next.ply = self.ply + 1;
        next
    }

    pub fn is_legal(&self, action: MoveAction) -> bool {
        let side = self.side_to_move;
        match self.board[action.from.index()] {
            Some(p) if p.side == side => {
                let mut moves = Vec::new();
                self.piece_moves(action.from, p, &mut moves);
                moves.contains(&action) && !self.apply_unchecked(action).in_check(side)
            }
            _ => false,
        }
    }

    pub fn legal_moves(&self) -> Vec<MoveAction> {
        let side = self.side_to_move;
        let mut moves = self.pseudo_moves(side);
        moves.retain(|&m| !self.apply_unchecked(m).in_check(side));
        moves.sort_unstable();
        moves
    }

    pub fn apply_move(&self, action: MoveAction) -> Result<GameState, RulesError> {
        if self.is_legal(action) {
            Ok(self.apply_unchecked(action))
        } else {
            Err(RulesError::IllegalMove(action))
        }
    }

    /// The side left without a legal move loses.
    pub fn outcome(&self) -> Outcome {
        if self.has_legal_move() {
            Outcome::Ongoing
        } else {
            match self.side_to_move {
                Side::Red => Outcome::BlackWins,
                Side::Black => Outcome::RedWins,
            }
        }
    }

    pub fn has_legal_move(&self) -> bool {
        let side = self.side_to_move;
        self.pseudo_moves(side)
            .into_iter()
            .any(|m| !self.apply_unchecked(m).in_check(side))
    }
}

fn advisor_parity(side: Side) -> u8 {
    // Palace diagonal points: file + rank is even for Red (4,1),(5,2)..., odd for Black (4,10),(5,9)...
    match side {
        Side::Red => 1,
        Side::Black => 0,
    }
}

fn elephant_point(side: Side, sq: Square) -> bool {
    let rel_rank = match side {
        Side::Red => sq.rank,
        Side::Black => RANKS + 1 - sq.rank,
    };
    match rel_rank {
        1 | 5 => sq.file == 3 || sq.file == 7,
        3 => sq.file % 4 == 1,
        _ => false,
    }
}

fn soldier_point(side: Side, sq: Square) -> bool {
    let rel_rank = match side {
        Side::Red => sq.rank,
        Side::Black => RANKS + 1 - sq.rank,
    };
    match rel_rank {
        1..=3 => false,
        4 | 5 => sq.file % 2 == 1,
        _ => true,
    }
}

pub fn legal_moves(state: &GameState) -> Vec<MoveAction> {
    state.legal_moves()
}

pub fn apply_move(state: &GameState, action: MoveAction) -> Result<GameState, RulesError> {
    state.apply_move(action)
}

pub fn in_check(state: &GameState, side: Side) -> bool {
    state.in_check(side)
}

pub fn game_outcome(state: &GameState) -> Outcome {
    state.outcome()
}

/// Replays tokens from the initial position.
pub fn replay(moves: &[MoveToken]) -> Result<GameState, RulesError> {
    let mut state = initial_state();
    for (index, token) in moves.iter().enumerate() {
        let action = movespace::resolve(token, &state)
            .map_err(|source| RulesError::IllegalSequence { index, source })?;
        state = state.apply_unchecked(action);
    }
    Ok(state)
}

/// Like [`replay`] but also returns every intermediate position (`moves.len() + 1` states).
pub fn replay_positions(moves: &[MoveToken]) -> Result<Vec<GameState>, RulesError> {
    let mut states = Vec::with_capacity(moves.len() + 1);
    states.push(initial_state());
    for (index, token) in moves.iter().enumerate() {
        let state = states.last().expect("nonempty");
        let action = movespace::resolve(token, state)
            .map_err(|source| RulesError::IllegalSequence { index, source })?;
        let next = state.apply_unchecked(action);
        states.push(next);
    }
    Ok(states)
}

pub fn perft(state: &GameState, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = state.legal_moves();
    if depth == 1 {
        return moves.len() as u64;
    }
    moves
        .into_iter()
        .map(|m| perft(&state.apply_unchecked(m), depth - 1))
        .sum()
}
