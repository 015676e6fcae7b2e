//! Side-relative WXF-style move tokens, the fixed token vocabulary, and the
//! token <-> board-action mapping used for the locally-legal mask.
//!
//! WXF files are counted from each player's right hand: for Red, WXF file `w`
//! is board file `10 - w`; for Black it is board file `w`. "Forward" always
//! means toward the opponent.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rules::{GameState, MoveAction, PieceKind, Side, Square, FILES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Disambiguator {
    None,
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Forward,
    Backward,
    Traverse,
}

impl Operator {
    fn symbol(self) -> char {
        match self {
            Operator::Forward => '+',
            Operator::Backward => '-',
            Operator::Traverse => '=',
        }
    }
}

/// One move label. Field order defines the vocabulary sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoveToken {
    pub kind: PieceKind,
    pub disambiguator: Disambiguator,
    /// WXF file of the moving piece; absent iff a Front/Rear disambiguator is used.
    pub origin_file: Option<u8>,
    pub operator: Operator,
    /// Destination WXF file (Traverse and diagonal movers) or step count.
    pub argument: u8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("malformed token: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolveError {
    #[error("token {0} does not match any piece or geometry")]
    Unresolvable(String),
    #[error("token {0} matches more than one piece")]
    Ambiguous(String),
    #[error("token {0} leaves the general exposed")]
    LocallyIllegal(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("{0} is not a legal move in this position")]
    NotLegal(MoveAction),
    #[error("{0} cannot be expressed: more than two same-kind pieces share a file or several files are doubled")]
    Untokenizable(MoveAction),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(MoveToken),
    #[error("index {index} out of range for vocabulary of {size}")]
    IndexOutOfRange { index: usize, size: usize },
}

impl MoveToken {
    pub fn plain(kind: PieceKind, origin_file: u8, operator: Operator, argument: u8) -> Result<Self, TokenError> {
        MoveToken { kind, disambiguator: Disambiguator::None, origin_file: Some(origin_file), operator, argument }
            .validated()
    }

    pub fn tandem(kind: PieceKind, which: Disambiguator, operator: Operator, argument: u8) -> Result<Self, TokenError> {
        MoveToken { kind, disambiguator: which, origin_file: None, operator, argument }.validated()
    }

    fn validated(self) -> Result<Self, TokenError> {
        let bad = |m: &str| Err(TokenError::Malformed(format!("{self}: {m}")));
        if !(1..=FILES).contains(&self.argument) {
            return bad("argument out of 1..9");
        }
        match (self.disambiguator, self.origin_file) {
            (Disambiguator::None, None) => return bad("missing origin file"),
            (Disambiguator::None, Some(f)) if !(1..=FILES).contains(&f) => return bad("origin file out of 1..9"),
            (Disambiguator::Front | Disambiguator::Rear, Some(_)) => return bad("tandem token carries an origin file"),
            _ => {}
        }
        if self.operator == Operator::Traverse {
            if self.kind.moves_diagonally() {
                return bad("diagonal movers cannot traverse");
            }
            if self.origin_file == Some(self.argument) {
                return bad("traverse onto the same file");
            }
            if self.kind == PieceKind::Soldier {
                if let Some(f) = self.origin_file {
                    if f.abs_diff(self.argument) != 1 {
                        return bad("soldier traverses one file");
                    }
                }
            }
        }
        Ok(self)
    }
}

impl fmt::Display for MoveToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.disambiguator {
            Disambiguator::None => write!(f, "{}{}", self.kind.letter(), self.origin_file.unwrap_or(0))?,
            Disambiguator::Front => write!(f, "+{}", self.kind.letter())?,
            Disambiguator::Rear => write!(f, "-{}", self.kind.letter())?,
        }
        write!(f, "{}{}", self.operator.symbol(), self.argument)
    }
}

impl FromStr for MoveToken {
    type Err = TokenError;

    /// Canonical text (`C2=5`, `+R+3`) plus the `.` traverse variant and
    /// the Unicode minus sign.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.trim().chars().collect();
        let err = |offset: usize, message: &str| TokenError::Parse { offset, message: message.to_string() };
        let file_digit = |i: usize| -> Result<u8, TokenError> {
            match chars.get(i).and_then(|c| c.to_digit(10)) {
                Some(d) if (1..=9).contains(&d) => Ok(d as u8),
                _ => Err(err(i, "expected a file digit 1-9")),
            }
        };
        let operator_at = |i: usize| -> Result<Operator, TokenError> {
            match chars.get(i) {
                Some('+') => Ok(Operator::Forward),
                Some('-') | Some('\u{2212}') => Ok(Operator::Backward),
                Some('=') | Some('.') => Ok(Operator::Traverse),
                _ => Err(err(i, "expected an operator (+, -, =)")),
            }
        };
        let kind_at = |i: usize| -> Result<PieceKind, TokenError> {
            chars
                .get(i)
                .and_then(|&c| PieceKind::from_letter(c))
                .ok_or_else(|| err(i, "expected a piece letter"))
        };
        if chars.len() != 4 {
            return Err(err(chars.len().min(4), "expected exactly four characters"));
        }
        let token = match chars[0] {
            '+' | '-' | '\u{2212}' => {
                let which = if chars[0] == '+' { Disambiguator::Front } else { Disambiguator::Rear };
                let kind = kind_at(1)?;
                let operator = operator_at(2)?;
                let argument = file_digit(3)?;
                MoveToken { kind, disambiguator: which, origin_file: None, operator, argument }
            }
            _ => {
                let kind = kind_at(0)?;
                let origin = file_digit(1)?;
                let operator = operator_at(2)?;
                let argument = file_digit(3)?;
                MoveToken { kind, disambiguator: Disambiguator::None, origin_file: Some(origin), operator, argument }
            }
        };
        token.validated()
    }
}

pub fn board_file(side: Side, wxf_file: u8) -> u8 {
    match side {
        Side::Red => FILES + 1 - wxf_file,
        Side::Black => wxf_file,
    }
}

pub fn wxf_file(side: Side, board_file: u8) -> u8 {
    // the mapping is an involution
    self::board_file(side, board_file)
}

/// Is `a` nearer the opponent than `b` for `side`?
fn is_front(side: Side, a: Square, b: Square) -> bool {
    match side {
        Side::Red => a.rank() > b.rank(),
        Side::Black => a.rank() < b.rank(),
    }
}

fn squares_of(state: &GameState, side: Side, kind: PieceKind, file: u8) -> Vec<Square> {
    (1..=10)
        .filter_map(|r| Square::new(file, r))
        .filter(|&sq| state.piece_at(sq).is_some_and(|p| p.side == side && p.kind == kind))
        .collect()
}

fn locate(token: &MoveToken, state: &GameState) -> Result<Square, ResolveError> {
    let side = state.side_to_move();
    let text = || token.to_string();
    match token.disambiguator {
        Disambiguator::None => {
            let file = board_file(side, token.origin_file.ok_or_else(|| ResolveError::Unresolvable(text()))?);
            match squares_of(state, side, token.kind, file).as_slice() {
                [] => Err(ResolveError::Unresolvable(text())),
                [sq] => Ok(*sq),
                _ => Err(ResolveError::Ambiguous(text())),
            }
        }
        which => {
            let doubled: Vec<Vec<Square>> = (1..=FILES)
                .map(|f| squares_of(state, side, token.kind, f))
                .filter(|v| v.len() >= 2)
                .collect();
            match doubled.as_slice() {
                [] => Err(ResolveError::Unresolvable(text())),
                [pair] if pair.len() == 2 => {
                    let (front, rear) = if is_front(side, pair[0], pair[1]) {
                        (pair[0], pair[1])
                    } else {
                        (pair[1], pair[0])
                    };
                    Ok(if which == Disambiguator::Front { front } else { rear })
                }
                _ => Err(ResolveError::Ambiguous(text())),
            }
        }
    }
}

fn destination(token: &MoveToken, side: Side, from: Square) -> Option<Square> {
    let fwd = side.forward();
    let n = token.argument as i8;
    if token.kind.moves_diagonally() {
        let dir = match token.operator {
            Operator::Forward => fwd,
            Operator::Backward => -fwd,
            Operator::Traverse => return None,
        };
        let df = board_file(side, token.argument) as i8 - from.file() as i8;
        let dr = match (token.kind, df.abs()) {
            (PieceKind::Advisor, 1) => 1,
            (PieceKind::Elephant, 2) => 2,
            (PieceKind::Horse, 1) => 2,
            (PieceKind::Horse, 2) => 1,
            _ => return None,
        };
        from.offset(df, dr * dir)
    } else {
        match token.operator {
            Operator::Forward => from.offset(0, n * fwd),
            Operator::Backward => from.offset(0, -n * fwd),
            Operator::Traverse => {
                let file = board_file(side, token.argument);
                if file == from.file() {
                    None
                } else {
                    Square::new(file, from.rank())
                }
            }
        }
    }
}

/// The board action `token` denotes for the side to move.
pub fn resolve(token: &MoveToken, state: &GameState) -> Result<MoveAction, ResolveError> {
    let side = state.side_to_move();
    let from = locate(token, state)?;
    let to = destination(token, side, from).ok_or_else(|| ResolveError::Unresolvable(token.to_string()))?;
    let action = MoveAction::new(from, to);
    let piece = state.piece_at(from).expect("located piece");
    let mut geometric = Vec::with_capacity(17);
    state.piece_moves(from, piece, &mut geometric);
    if !geometric.contains(&action) {
        return Err(ResolveError::Unresolvable(token.to_string()));
    }
    if state.apply_unchecked(action).in_check(side) {
        return Err(ResolveError::LocallyIllegal(token.to_string()));
    }
    Ok(action)
}

/// Inverse of [`resolve`] for legal actions.
pub fn tokenize(action: MoveAction, state: &GameState) -> Result<MoveToken, TokenizeError> {
    let side = state.side_to_move();
    let piece = match state.piece_at(action.from) {
        Some(p) if p.side == side => p,
        _ => return Err(TokenizeError::NotLegal(action)),
    };
    let kind = piece.kind;
    let same_file = squares_of(state, side, kind, action.from.file());
    let disambiguator = match same_file.len() {
        1 => Disambiguator::None,
        2 => {
            let other_doubled = (1..=FILES)
                .filter(|&f| f != action.from.file())
                .any(|f| squares_of(state, side, kind, f).len() >= 2);
            if other_doubled {
                return Err(TokenizeError::Untokenizable(action));
            }
            let other = if same_file[0] == action.from { same_file[1] } else { same_file[0] };
            if is_front(side, action.from, other) {
                Disambiguator::Front
            } else {
                Disambiguator::Rear
            }
        }
        _ => return Err(TokenizeError::Untokenizable(action)),
    };
    let dr = action.to.rank() as i8 - action.from.rank() as i8;
    let operator = if dr == 0 {
        Operator::Traverse
    } else if dr.signum() == side.forward() {
        Operator::Forward
    } else {
        Operator::Backward
    };
    let argument = if operator == Operator::Traverse || kind.moves_diagonally() {
        wxf_file(side, action.to.file())
    } else {
        dr.unsigned_abs()
    };
    let token = MoveToken {
        kind,
        disambiguator,
        origin_file: (disambiguator == Disambiguator::None).then(|| wxf_file(side, action.from.file())),
        operator,
        argument,
    };
    match resolve(&token, state) {
        Ok(a) if a == action => Ok(token),
        _ => Err(TokenizeError::NotLegal(action)),
    }
}

/// The ordered label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveVocabulary {
    tokens: Vec<MoveToken>,
    index_of: HashMap<MoveToken, usize>,
}

impl MoveVocabulary {
    pub fn from_tokens(mut tokens: Vec<MoveToken>) -> Self {
        tokens.sort_unstable();
        tokens.dedup();
        let index_of = tokens.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        MoveVocabulary { tokens, index_of }
    }

    /// Process-wide shared instance of [`enumerate_vocabulary`].
    pub fn standard() -> &'static MoveVocabulary {
        static VOCAB: OnceLock<MoveVocabulary> = OnceLock::new();
        VOCAB.get_or_init(enumerate_vocabulary)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[MoveToken] {
        &self.tokens
    }

    pub fn encode(&self, token: &MoveToken) -> Result<usize, VocabError> {
        self.index_of.get(token).copied().ok_or(VocabError::UnknownToken(*token))
    }

    pub fn decode(&self, index: usize) -> Result<MoveToken, VocabError> {
        self.tokens
            .get(index)
            .copied()
            .ok_or(VocabError::IndexOutOfRange { index, size: self.tokens.len() })
    }

    /// One token per line, line number = index.
    pub fn manifest(&self) -> String {
        let mut out = String::with_capacity(self.tokens.len() * 6);
        for t in &self.tokens {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self, TokenError> {
        let tokens = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(MoveToken::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = MoveVocabulary::from_tokens(tokens.clone());
        if vocab.tokens != tokens {
            return Err(TokenError::Malformed("manifest is not sorted or has duplicates".into()));
        }
        Ok(vocab)
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.manifest().as_bytes()).into()
    }

    /// Entry `i` is true iff token `i` resolves to a legal move in `state`.
    pub fn locally_legal_mask(&self, state: &GameState) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for action in state.legal_moves() {
            if let Ok(i) = tokenize(action, state).map_err(|_| ()).and_then(|t| self.encode(&t).map_err(|_| ())) {
                mask[i] = true;
            }
        }
        mask
    }

    /// Indices of the locally legal tokens, ascending.
    pub fn legal_indices(&self, state: &GameState) -> Vec<usize> {
        let mut out: Vec<usize> = state
            .legal_moves()
            .into_iter()
            .filter_map(|a| tokenize(a, state).ok())
            .filter_map(|t| self.encode(&t).ok())
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn locally_legal_mask(state: &GameState) -> Vec<bool> {
    MoveVocabulary::standard().locally_legal_mask(state)
}

/// Every token some arrangement of pieces can turn into a geometrically
/// legal move, built by case analysis per piece kind. Tokens are
/// side-relative, so the analysis runs in one player's frame, with ranks
/// counted from that player's back rank and files in WXF numbering.
pub fn enumerate_vocabulary() -> MoveVocabulary {
    use Disambiguator::{Front, Rear};
    use Operator::{Backward, Forward, Traverse};
    use PieceKind::*;

    let mut out: Vec<MoveToken> = Vec::new();
    let mut plain = |kind, f, op, a| out.push(MoveToken::plain(kind, f, op, a).expect("well-formed"));
    let files = 1..=FILES;

    // General: one step orthogonally inside the palace (files 4-6, ranks 1-3).
    for f in 4..=6u8 {
        plain(General, f, Forward, 1);
        plain(General, f, Backward, 1);
        for g in [f.wrapping_sub(1), f + 1] {
            if (4..=6).contains(&g) {
                plain(General, f, Traverse, g);
            }
        }
    }

    // Advisor: palace diagonals between the corners and the centre.
    for f in [4u8, 6] {
        plain(Advisor, f, Forward, 5);
        plain(Advisor, f, Backward, 5);
        plain(Advisor, 5, Forward, f);
        plain(Advisor, 5, Backward, f);
    }

    // Elephant: the seven points on the own half, two diagonal steps apart.
    let elephant_points: [(u8, u8); 7] = [(3, 1), (7, 1), (1, 3), (5, 3), (9, 3), (3, 5), (7, 5)];
    for &(f, r) in &elephant_points {
        for &(g, s) in &elephant_points {
            if f.abs_diff(g) == 2 && r.abs_diff(s) == 2 {
                plain(Elephant, f, if s > r { Forward } else { Backward }, g);
            }
        }
    }

    // Horse: from any file to a file one or two away, either direction.
    for f in files.clone() {
        for g in files.clone() {
            if matches!(f.abs_diff(g), 1 | 2) {
                plain(Horse, f, Forward, g);
                plain(Horse, f, Backward, g);
            }
        }
    }

    // Chariot and cannon: up to nine steps either way, or across to any other file.
    for kind in [Chariot, Cannon] {
        for f in files.clone() {
            for n in 1..=9 {
                plain(kind, f, Forward, n);
                plain(kind, f, Backward, n);
            }
            for g in files.clone().filter(|&g| g != f) {
                plain(kind, f, Traverse, g);
            }
        }
    }

    // Soldier: after crossing the river it can stand on any file, step forward or sideways.
    for f in files.clone() {
        plain(Soldier, f, Forward, 1);
        for g in [f.wrapping_sub(1), f + 1] {
            if files.contains(&g) {
                plain(Soldier, f, Traverse, g);
            }
        }
    }

    let mut tandem = |kind, which, op, a| out.push(MoveToken::tandem(kind, which, op, a).expect("well-formed"));

    // Two advisors share file 4 or 6 at ranks 3 (front) and 1 (rear): both can only reach the centre.
    tandem(Advisor, Front, Backward, 5);
    tandem(Advisor, Rear, Forward, 5);

    // Two elephants share file 3 or 7 at ranks 5 (front) and 1 (rear).
    for f in [3u8, 7] {
        for g in [f - 2, f + 2] {
            tandem(Elephant, Front, Backward, g);
            tandem(Elephant, Rear, Forward, g);
        }
    }

    // Horses: every destination file is one or two away from some shared file;
    // the partner never blocks a leg that some other arrangement leaves open.
    for which in [Front, Rear] {
        for g in files.clone() {
            tandem(Horse, which, Forward, g);
            tandem(Horse, which, Backward, g);
        }
    }

    // Doubled sliders: front at rank a, rear at rank b < a. The partner blocks
    // the stretch between them, so the front retreats at most a-b-1 <= 8 and
    // advances at most 10-a <= 8; symmetrically for the rear. A cannon may
    // also jump its partner to capture, reaching the full nine steps inward.
    for (kind, inward) in [(Chariot, 8u8), (Cannon, 9u8)] {
        for n in 1..=8 {
            tandem(kind, Front, Forward, n);
            tandem(kind, Rear, Backward, n);
        }
        for n in 1..=inward {
            tandem(kind, Front, Backward, n);
            tandem(kind, Rear, Forward, n);
        }
        for which in [Front, Rear] {
            for g in files.clone() {
                tandem(kind, which, Traverse, g);
            }
        }
    }

    // Doubled soldiers have crossed the river: one step forward or sideways onto any file.
    for which in [Front, Rear] {
        tandem(Soldier, which, Forward, 1);
        for g in files.clone() {
            tandem(Soldier, which, Traverse, g);
        }
    }

    MoveVocabulary::from_tokens(out)
}
