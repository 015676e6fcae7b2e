//! Imitation of human Xiangqi play: rules engine, move vocabulary, game-record
//! ingestion, windowed datasets, a structurally variable recurrent move
//! predictor, structure search and evaluation metrics.

pub mod dataset;
pub mod eval;
pub mod model;
pub mod movespace;
pub mod notation;
pub mod rules;
pub mod search;
pub mod synthetic;

pub use movespace::{MoveToken, MoveVocabulary};
pub use rules::{GameState, MoveAction, Outcome, Piece, PieceKind, Side, Square};
