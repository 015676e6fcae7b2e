//! Accuracy metrics: strict top-1, top-k, top-p probability accuracy, the
//! cross-bin accuracy matrix and single-component ablations.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    make_bin_samples, BinPolicy, DatasetError, EloBin, GameAssignment, GameIndex, Memory, SplitRatios,
    TrainingSample,
};
use crate::model::{filter, train, Model, ModelError, ModelOptions, Real, StructureConfig, TrainOptions};
use crate::movespace::MoveVocabulary;
use crate::notation::GameRecord;
use crate::rules::{replay_positions, GameState};

/// Position of `y` when indices are ordered by descending probability,
/// lower index first on ties.
fn rank_of(probs: &[f64], y: usize) -> usize {
    let py = probs[y];
    probs.iter().enumerate().filter(|&(j, &p)| p > py || (p == py && j < y)).count()
}

/// `y` is among the `k` most probable indices.
pub fn top_k_correct(probs: &[f64], y: usize, k: usize) -> bool {
    rank_of(probs, y) < k
}

/// `y` lies in the shortest most-probable prefix whose mass exceeds `p`
/// (the whole vocabulary when no prefix does, e.g. `p = 1`).
pub fn top_p_correct(probs: &[f64], y: usize, p: f64) -> bool {
    if p >= 1.0 {
        return true;
    }
    let py = probs[y];
    let before: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > py || (q == py && j < y))
        .map(|(_, &q)| q)
        .sum();
    before <= p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub samples: usize,
    pub top1: f64,
    pub top_k: Vec<(usize, f64)>,
    pub top_p: Vec<(f64, f64)>,
    pub filtered: bool,
    /// Samples skipped because their position could not be rebuilt.
    pub anomalies: usize,
}

impl EvalReport {
    /// Two-column text tables of the k and p curves.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: {} samples, top-1 {:.2}%{}",
            self.label,
            self.samples,
            100.0 * self.top1,
            if self.filtered { " (filtered)" } else { " (unfiltered)" }
        );
        if !self.top_k.is_empty() {
            let _ = writeln!(s, "{:>6} | {:>7}", "k", "Acc.");
            for (k, a) in &self.top_k {
                let _ = writeln!(s, "{k:>6} | {:>7.2}", 100.0 * a);
            }
        }
        if !self.top_p.is_empty() {
            let _ = writeln!(s, "{:>6} | {:>7}", "p", "Acc.");
            for (p, a) in &self.top_p {
                let _ = writeln!(s, "{p:>6.2} | {:>7.2}", 100.0 * a);
            }
        }
        s
    }

    /// `kind,x,accuracy` rows for plotting.
    pub fn csv(&self) -> String {
        let mut s = String::from("curve,x,accuracy\n");
        for (k, a) in &self.top_k {
            let _ = writeln!(s, "top_k,{k},{a}");
        }
        for (p, a) in &self.top_p {
            let _ = writeln!(s, "top_p,{p},{a}");
        }
        s
    }
}

/// Rebuilds positions from game prefixes, replaying each game once.
pub struct PositionCache<'a> {
    games: &'a GameIndex,
    positions: HashMap<String, Option<Vec<GameState>>>,
}

impl<'a> PositionCache<'a> {
    pub fn new(games: &'a GameIndex) -> Self {
        PositionCache { games, positions: HashMap::new() }
    }

    /// Position before the one-based `ply` of `game_id`.
    pub fn before(&mut self, game_id: &str, ply: u32) -> Option<&GameState> {
        let games = self.games;
        self.positions
            .entry(game_id.to_string())
            .or_insert_with(|| games.moves(game_id).and_then(|m| replay_positions(m).ok()))
            .as_ref()
            .and_then(|states| states.get(ply as usize - 1))
    }
}

/// Scores `samples` in one pass. With `use_filter` each distribution is
/// restricted to the moves legal in the sample's position.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    samples: &[TrainingSample],
    games: &GameIndex,
    vocab: &MoveVocabulary,
    ks: &[usize],
    ps: &[f64],
    use_filter: bool,
) -> Result<EvalReport, ModelError> {
    let mut cache = PositionCache::new(games);
    let mut scored = 0usize;
    let mut anomalies = 0usize;
    let mut top1 = 0usize;
    let mut k_hits = vec![0usize; ks.len()];
    let mut p_hits = vec![0usize; ps.len()];
    for chunk in samples.chunks(512) {
        let xs: Vec<&[u16]> = chunk.iter().map(|s| crate::model::window(&s.x, model.config.m)).collect();
        let dists = model.forward_batch(&xs)?;
        for (s, dist) in chunk.iter().zip(dists) {
            let dist = if use_filter {
                let Some(state) = cache.before(&s.game_id, s.ply) else {
                    anomalies += 1;
                    continue;
                };
                match filter(&dist, &vocab.locally_legal_mask(state)) {
                    Ok(d) => d,
                    Err(_) => {
                        anomalies += 1;
                        continue;
                    }
                }
            } else {
                dist
            };
            let y = s.y as usize;
            scored += 1;
            top1 += (dist.argmax() == y) as usize;
            let rank = rank_of(&dist.probs, y);
            for (hit, &k) in k_hits.iter_mut().zip(ks) {
                *hit += (rank < k) as usize;
            }
            for (hit, &p) in p_hits.iter_mut().zip(ps) {
                *hit += top_p_correct(&dist.probs, y, p) as usize;
            }
        }
    }
    let frac = |n: usize| if scored == 0 { 0.0 } else { n as f64 / scored as f64 };
    Ok(EvalReport {
        label: String::new(),
        samples: scored,
        top1: frac(top1),
        top_k: ks.iter().zip(&k_hits).map(|(&k, &n)| (k, frac(n))).collect(),
        top_p: ps.iter().zip(&p_hits).map(|(&p, &n)| (p, frac(n))).collect(),
        filtered: use_filter,
        anomalies,
    })
}

/// Entry (i, j) is the top-1 accuracy of model i on sample set j.
pub fn cross_elo_matrix<T: Real>(
    models: &[&Model<T>],
    datasets: &[&[TrainingSample]],
    games: &GameIndex,
    vocab: &MoveVocabulary,
    use_filter: bool,
) -> Result<Vec<Vec<f64>>, ModelError> {
    models
        .iter()
        .map(|m| datasets.iter().map(|d| evaluate(*m, d, games, vocab, &[], &[], use_filter).map(|r| r.top1)).collect())
        .collect()
}

/// Text rendering of a matrix with row and column labels.
pub fn matrix_table(labels: &[String], matrix: &[Vec<f64>]) -> String {
    let mut s = format!("{:>12}", "model\\data");
    for l in labels {
        let _ = write!(s, " {l:>10}");
    }
    s.push('\n');
    for (l, row) in labels.iter().zip(matrix) {
        let _ = write!(s, "{l:>12}");
        for v in row {
            let _ = write!(s, " {:>10.2}", 100.0 * v);
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    /// Train on every bin at once; score on the target bin.
    NoPartition,
    /// Unbounded history.
    PerfectMemory,
    /// Score without the legality filter.
    NoFilter,
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::NoPartition => "no_partition",
            AblationMode::PerfectMemory => "perfect_memory",
            AblationMode::NoFilter => "no_filter",
        }
    }
}

/// Everything a train-then-score run needs besides the corpus.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: StructureConfig,
    pub options: ModelOptions,
    pub train: TrainOptions,
    pub ratios: SplitRatios,
    pub policy: BinPolicy,
    pub split_seed: u64,
    pub model_seed: u64,
    pub ks: Vec<usize>,
    pub ps: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn samples_by_part(
    records: &[GameRecord],
    bin: &EloBin,
    memory: Memory,
    pipeline: &Pipeline,
    assignment: &GameAssignment,
    vocab: &MoveVocabulary,
) -> Result<[Vec<TrainingSample>; 3], PipelineError> {
    let all = make_bin_samples(records, memory, bin, pipeline.policy, vocab)?;
    let split = assignment.split(all, pipeline.split_seed);
    Ok([split.train, split.validation, split.test])
}

/// Trains on `train_bin` and scores on the test games of `test_bin`.
/// Games are assigned to splits once over the whole corpus, so every run
/// on the same corpus uses the same test games.
pub fn run_pipeline(
    records: &[GameRecord],
    train_bin: &EloBin,
    test_bin: &EloBin,
    pipeline: &Pipeline,
    use_filter: bool,
    vocab: &MoveVocabulary,
) -> Result<(Model<f32>, EvalReport), PipelineError> {
    let assignment =
        GameAssignment::new(records.iter().map(|r| r.source_id.as_str()), pipeline.ratios, pipeline.split_seed);
    let [train_set, validation, _] = samples_by_part(records, train_bin, pipeline.config.m, pipeline, &assignment, vocab)?;
    let [_, _, test] = samples_by_part(records, test_bin, pipeline.config.m, pipeline, &assignment, vocab)?;
    let mut model = Model::<f32>::build(pipeline.config, pipeline.options, vocab.len(), pipeline.model_seed)?;
    train(&mut model, &train_set, &validation, &pipeline.train)?;
    let games = GameIndex::new(records);
    let mut report = evaluate(&model, &test, &games, vocab, &pipeline.ks, &pipeline.ps, use_filter)?;
    report.label = format!("{test_bin}");
    Ok((model, report))
}

/// The same pipeline with one component disabled.
pub fn ablation_run(
    mode: AblationMode,
    records: &[GameRecord],
    bin: &EloBin,
    pipeline: &Pipeline,
    vocab: &MoveVocabulary,
) -> Result<EvalReport, PipelineError> {
    let mut p = pipeline.clone();
    let mut train_bin = *bin;
    let mut use_filter = true;
    match mode {
        AblationMode::NoPartition => train_bin = EloBin::everything(),
        AblationMode::PerfectMemory => p.config.m = Memory::Unbounded,
        AblationMode::NoFilter => use_filter = false,
    }
    let (_, mut report) = run_pipeline(records, &train_bin, bin, &p, use_filter, vocab)?;
    report.label = format!("{bin} {}", mode.name());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        let d = [0.5, 0.3, 0.2];
        assert!(top_k_correct(&d, 1, 2));
        assert!(!top_k_correct(&d, 1, 1));
        assert!(top_p_correct(&d, 1, 0.6));
        assert!(!top_p_correct(&d, 2, 0.6));
        assert!(top_p_correct(&d, 0, 0.0));
        assert!(!top_p_correct(&d, 1, 0.0));
        assert!(top_p_correct(&d, 2, 1.0));
        // ties resolve toward the lower index
        let t = [0.4, 0.4, 0.2];
        assert!(top_k_correct(&t, 0, 1));
        assert!(!top_k_correct(&t, 1, 1));
        assert!(top_p_correct(&t, 0, 0.0) && !top_p_correct(&t, 1, 0.0));
    }
}
