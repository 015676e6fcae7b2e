#![allow(dead_code)]

pub mod brute;
pub mod naive;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xqmimic_core::rules::{initial_state, GameState, Side};

/// Positions along a uniformly random legal playout (stops early at mate).
pub fn random_playout(seed: u64, plies: usize) -> Vec<GameState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![initial_state()];
    for _ in 0..plies {
        let s = states.last().unwrap();
        let moves = s.legal_moves();
        let Some(&m) = moves.choose(&mut rng) else { break };
        let next = s.apply_move(m).unwrap();
        states.push(next);
    }
    states
}

pub fn to_naive(state: &GameState) -> naive::Board {
    naive::Board::from_text(&state.board_text(), state.side_to_move() == Side::Red)
}

/// Tokens of a random playout, truncated at the first move the vocabulary cannot name.
pub fn random_tokens(seed: u64, plies: usize) -> Vec<xqmimic_core::MoveToken> {
    let states = random_playout(seed, plies);
    let mut out = Vec::new();
    for pair in states.windows(2) {
        let action = pair[0]
            .legal_moves()
            .into_iter()
            .find(|&m| pair[0].apply_move(m).unwrap() == pair[1])
            .unwrap();
        match xqmimic_core::movespace::tokenize(action, &pair[0]) {
            Ok(t) => out.push(t),
            Err(_) => break,
        }
    }
    out
}

pub fn random_record(seed: u64, plies: usize, red_elo: i32, black_elo: i32) -> xqmimic_core::notation::GameRecord {
    xqmimic_core::notation::GameRecord {
        source_id: format!("rand-{seed}"),
        red_elo,
        black_elo,
        result: xqmimic_core::notation::GameResult::Unknown,
        moves: random_tokens(seed, plies),
    }
}
