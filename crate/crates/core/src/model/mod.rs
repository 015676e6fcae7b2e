//! The structurally variable recurrent move predictor.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod network;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Memory;
use crate::movespace::{MoveToken, MoveVocabulary};
use crate::rules::GameState;

pub use checkpoint::{load, save, CheckpointError, CheckpointMeta};
pub use config::{
    Activation, ModelOptions, RnnKind, StructureConfig, DROPOUT_CANDIDATES, FC_REG_CANDIDATES, FIELD_NAMES,
    HIDDEN_CANDIDATES, M_CANDIDATES, NUM_FC_CANDIDATES,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use network::{cross_entropy, Mode, Model, Params, Real};
pub use train::{train, EpochRecord, TrainHistory, TrainOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("token index {index} out of range for vocabulary of {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("no legal move in this position")]
    NoLegalMove,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("history does not replay: {0}")]
    BadHistory(String),
}

/// A distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub probs: Vec<f64>,
    pub filtered: bool,
}

impl PredictionDistribution {
    /// Highest-probability index, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Indices ordered by descending probability, lower index first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        ranking(&self.probs)
    }

    /// One index drawn in proportion to its probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng)
    }
}

pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn ranking(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

/// Zeroes the entries where `mask` is false and renormalizes. If every
/// legal entry has underflowed to zero, the result is uniform over them.
pub fn filter(dist: &PredictionDistribution, mask: &[bool]) -> Result<PredictionDistribution, ModelError> {
    let legal = mask.iter().filter(|&&m| m).count();
    if legal == 0 {
        return Err(ModelError::NoLegalMove);
    }
    let mut probs: Vec<f64> = dist.probs.iter().zip(mask).map(|(&p, &m)| if m { p } else { 0.0 }).collect();
    let sum: f64 = probs.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        probs.iter_mut().for_each(|p| *p /= sum);
    } else {
        probs = mask.iter().map(|&m| if m { 1.0 / legal as f64 } else { 0.0 }).collect();
    }
    Ok(PredictionDistribution { probs, filtered: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    Argmax,
    Sample { seed: u64 },
}

/// The most recent `m` moves of a history.
pub fn window(history: &[u16], m: Memory) -> &[u16] {
    match m {
        Memory::Steps(m) if history.len() > m => &history[history.len() - m..],
        _ => history,
    }
}

impl<T: Real> Model<T> {
    /// Distribution for one history window, unfiltered.
    pub fn forward(&self, x: &[u16], mode: Mode) -> Result<PredictionDistribution, ModelError> {
        let lp = self.log_probs_with(&[x], mode, None)?;
        Ok(PredictionDistribution { probs: network::row_probs(lp.view(), 0), filtered: false })
    }

    /// Inference distributions for many windows at once.
    pub fn forward_batch(&self, xs: &[&[u16]]) -> Result<Vec<PredictionDistribution>, ModelError> {
        let lp = self.log_probs(xs)?;
        Ok((0..xs.len())
            .map(|r| PredictionDistribution { probs: network::row_probs(lp.view(), r), filtered: false })
            .collect())
    }

    /// Filtered distribution for the position after `history`.
    pub fn analyze(
        &self,
        history: &[MoveToken],
        state: &GameState,
        vocab: &MoveVocabulary,
    ) -> Result<PredictionDistribution, ModelError> {
        let indices = history
            .iter()
            .map(|t| vocab.encode(t).map(|i| i as u16))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ModelError::BadHistory(e.to_string()))?;
        let dist = self.forward(window(&indices, self.config.m), Mode::Infer)?;
        filter(&dist, &vocab.locally_legal_mask(state))
    }

    /// Chooses the next move after `history` (which must lead to `state`).
    pub fn predict(
        &self,
        history: &[MoveToken],
        state: &GameState,
        vocab: &MoveVocabulary,
        policy: Policy,
    ) -> Result<MoveToken, ModelError> {
        let dist = self.analyze(history, state, vocab)?;
        let index = match policy {
            Policy::Argmax => dist.argmax(),
            Policy::Sample { seed } => dist.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
        };
        vocab.decode(index).map_err(|e| ModelError::BadHistory(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_renormalizes() {
        let d = PredictionDistribution { probs: vec![0.25; 4], filtered: false };
        let f = filter(&d, &[true, false, true, false]).unwrap();
        assert_eq!(f.probs, [0.5, 0.0, 0.5, 0.0]);
        assert_eq!(filter(&d, &[false; 4]), Err(ModelError::NoLegalMove));
        let z = PredictionDistribution { probs: vec![1.0, 0.0, 0.0], filtered: false };
        assert_eq!(filter(&z, &[false, true, true]).unwrap().probs, [0.0, 0.5, 0.5]);
    }

    #[test]
    fn ranking_breaks_ties_low() {
        assert_eq!(ranking(&[0.2, 0.5, 0.2, 0.1]), [1, 0, 2, 3]);
        assert_eq!(argmax(&[0.3, 0.3, 0.1]), 0);
    }

    #[test]
    fn window_truncates() {
        assert_eq!(window(&[1, 2, 3, 4, 5, 6, 7], Memory::Steps(5)), [3, 4, 5, 6, 7]);
        assert_eq!(window(&[1, 2], Memory::Steps(5)), [1, 2]);
        assert_eq!(window(&[1, 2, 3], Memory::Unbounded), [1, 2, 3]);
    }
}
