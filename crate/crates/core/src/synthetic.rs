//! Synthetic game generators with known structure, for tests and demos.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::movespace::MoveVocabulary;
use crate::notation::{GameRecord, GameResult};
use crate::rules::{initial_state, GameState, Outcome};

/// Chooses the next move among the locally legal vocabulary indices.
pub trait MovePolicy: Sync {
    fn choose(&self, history: &[usize], state: &GameState, legal: &[usize], rng: &mut ChaCha8Rng) -> usize;
}

/// Uniform over legal moves.
pub struct UniformPolicy;

impl MovePolicy for UniformPolicy {
    fn choose(&self, _: &[usize], _: &GameState, legal: &[usize], rng: &mut ChaCha8Rng) -> usize {
        *legal.choose(rng).unwrap()
    }
}

fn random_scores(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>()).collect()
}

fn best_by(scores: &[f64], legal: &[usize]) -> usize {
    *legal.iter().max_by(|&&a, &&b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap()
}

/// Plays the legal move with the highest score in a fixed random table with
/// probability `greed`, otherwise a uniform legal move.
pub struct PreferencePolicy {
    pub scores: Vec<f64>,
    pub greed: f64,
}

impl PreferencePolicy {
    pub fn random(vocab_size: usize, greed: f64, seed: u64) -> Self {
        PreferencePolicy { scores: random_scores(vocab_size, &mut ChaCha8Rng::seed_from_u64(seed)), greed }
    }
}

impl MovePolicy for PreferencePolicy {
    fn choose(&self, _: &[usize], _: &GameState, legal: &[usize], rng: &mut ChaCha8Rng) -> usize {
        if rng.random_bool(self.greed) {
            best_by(&self.scores, legal)
        } else {
            *legal.choose(rng).unwrap()
        }
    }
}

/// With probability `repeat`, plays the same token as `lag` plies earlier
/// when it is legal; otherwise a uniform legal move. A model whose window
/// is shorter than `lag` never sees the token being repeated.
pub struct LaggedCopy {
    pub lag: usize,
    pub repeat: f64,
}

impl MovePolicy for LaggedCopy {
    fn choose(&self, history: &[usize], _: &GameState, legal: &[usize], rng: &mut ChaCha8Rng) -> usize {
        if let Some(i) = history.len().checked_sub(self.lag) {
            if legal.contains(&history[i]) && rng.random_bool(self.repeat) {
                return history[i];
            }
        }
        *legal.choose(rng).unwrap()
    }
}

/// Plays `games` games of at most `max_plies` plies. Ids are `{prefix}-{n}`.
pub fn generate_games(
    policy: &dyn MovePolicy,
    vocab: &MoveVocabulary,
    games: usize,
    max_plies: usize,
    (red_elo, black_elo): (i32, i32),
    prefix: &str,
    seed: u64,
) -> Vec<GameRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..games)
        .map(|n| {
            let mut state = initial_state();
            let mut history = Vec::new();
            let mut moves = Vec::new();
            let mut result = GameResult::Unknown;
            while moves.len() < max_plies {
                let legal = vocab.legal_indices(&state);
                if legal.is_empty() {
                    result = match state.outcome() {
                        Outcome::RedWins => GameResult::RedWins,
                        Outcome::BlackWins => GameResult::BlackWins,
                        Outcome::Ongoing => GameResult::Unknown,
                    };
                    break;
                }
                let index = policy.choose(&history, &state, &legal, &mut rng);
                let token = vocab.decode(index).unwrap();
                let action = crate::movespace::resolve(&token, &state).expect("legal index resolves");
                state = state.apply_move(action).unwrap();
                history.push(index);
                moves.push(token);
            }
            GameRecord { source_id: format!("{prefix}-{n}"), red_elo, black_elo, result, moves }
        })
        .collect()
}
