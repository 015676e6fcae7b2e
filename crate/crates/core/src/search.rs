//! Five-phase coordinate search over the structure variables. Each phase
//! grid-searches two variables with the others fixed at the previous
//! winners (or defaults) and keeps the config with the best validation
//! top-1 accuracy.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{make_bin_samples, BinPolicy, DatasetError, EloBin, GameAssignment, Memory, SplitRatios, TrainingSample};
use crate::model::{
    train, Activation, Model, ModelError, ModelOptions, RnnKind, StructureConfig, TrainOptions, FIELD_NAMES,
};
use crate::movespace::MoveVocabulary;
use crate::notation::GameRecord;

pub const DEFAULT_PHASES: [(&str, &str); 5] = [
    ("m", "rnn_kind"),
    ("rnn_dropout", "rnn_hidden"),
    ("rnn_activation", "batch_norm"),
    ("fc_dropout", "num_fc"),
    ("fc_reg", "fc_activation"),
];

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search plan: {0}")]
    InvalidPlan(String),
    #[error("bin {0} has no training samples")]
    EmptyBin(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchPlan {
    pub phases: Vec<(String, String)>,
    /// Restricted candidate lists; fields not listed use their full sets.
    pub candidates: BTreeMap<String, Vec<String>>,
    /// Starting point; fields keep these values until their phase.
    pub base: StructureConfig,
    pub options: ModelOptions,
    /// Per-candidate training; `max_epochs` is the epoch budget.
    pub train: TrainOptions,
    /// Retrain the final winner with this many epochs.
    pub final_epochs: Option<usize>,
    pub seed: u64,
}

impl Default for SearchPlan {
    fn default() -> Self {
        SearchPlan {
            phases: DEFAULT_PHASES.iter().map(|&(a, b)| (a.to_string(), b.to_string())).collect(),
            candidates: BTreeMap::new(),
            base: StructureConfig::default(),
            options: ModelOptions::default(),
            train: TrainOptions { max_epochs: 20, ..Default::default() },
            final_epochs: None,
            seed: 0,
        }
    }
}

impl SearchPlan {
    pub fn candidates_of(&self, field: &str) -> Vec<String> {
        self.candidates.get(field).cloned().or_else(|| StructureConfig::candidates(field)).unwrap_or_default()
    }

    /// Number of trainings each phase performs.
    pub fn phase_sizes(&self) -> Vec<usize> {
        self.phases.iter().map(|(a, b)| self.candidates_of(a).len() * self.candidates_of(b).len()).collect()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let mut seen: Vec<&str> = self.phases.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
        seen.sort_unstable();
        let mut all = FIELD_NAMES.to_vec();
        all.sort_unstable();
        if seen != all {
            return Err(SearchError::InvalidPlan("phases must cover every structure variable exactly once".into()));
        }
        for (field, values) in &self.candidates {
            if !FIELD_NAMES.contains(&field.as_str()) {
                return Err(SearchError::InvalidPlan(format!("unknown field {field:?}")));
            }
            if values.is_empty() {
                return Err(SearchError::InvalidPlan(format!("{field} has no candidates")));
            }
            let mut c = self.base;
            for v in values {
                c.set_field(field, v).map_err(|e| SearchError::InvalidPlan(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// The bin being searched and how its games are split.
pub struct SearchData<'a> {
    pub records: &'a [GameRecord],
    pub bin: EloBin,
    pub policy: BinPolicy,
    pub ratios: SplitRatios,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Candidate {
        phase: usize,
        index: usize,
        config: StructureConfig,
        seed: u64,
        /// Validation top-1 of the kept parameters; absent when training failed.
        accuracy: Option<f64>,
        epochs: usize,
        seconds: f64,
        error: Option<String>,
    },
    Phase {
        phase: usize,
        fields: (String, String),
        winner: StructureConfig,
        accuracy: f64,
    },
    Final {
        bin: String,
        config: StructureConfig,
        accuracy: f64,
        /// Validation top-1 after the full-budget retrain, if one was run.
        retrained_accuracy: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchLog {
    pub entries: Vec<LogEntry>,
}

impl SearchLog {
    pub fn candidates(&self, phase: usize) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(move |e| matches!(e, LogEntry::Candidate { phase: p, .. } if *p == phase))
    }

    pub fn final_entry(&self) -> Option<(&StructureConfig, f64, Option<f64>, &str)> {
        self.entries.iter().rev().find_map(|e| match e {
            LogEntry::Final { bin, config, accuracy, retrained_accuracy } => {
                Some((config, *accuracy, *retrained_accuracy, bin.as_str()))
            }
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SearchError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| SearchError::Log(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(SearchLog { entries })
    }
}

/// Seed for one candidate, fixed by the plan seed and the config alone.
pub fn candidate_seed(plan_seed: u64, config: &StructureConfig) -> u64 {
    let mut h = Sha256::new();
    h.update(plan_seed.to_le_bytes());
    h.update(config.to_string().as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Lower is simpler.
fn simplicity(field: &str, config: &StructureConfig) -> usize {
    match field {
        "m" => match config.m {
            Memory::Steps(m) => m,
            Memory::Unbounded => usize::MAX,
        },
        "rnn_kind" => match config.rnn_kind {
            RnnKind::Gru => 0,
            RnnKind::Lstm => 1,
            RnnKind::BackwardGru => 2,
            RnnKind::BackwardLstm => 3,
        },
        "rnn_activation" | "fc_activation" => {
            let a = if field == "fc_activation" { config.fc_activation } else { config.rnn_activation };
            match a {
                Activation::Linear => 0,
                Activation::Relu => 1,
                Activation::Tanh => 2,
                Activation::Softmax => 3,
            }
        }
        "batch_norm" => config.batch_norm as usize,
        "rnn_dropout" => (config.rnn_dropout * 1e6) as usize,
        "fc_dropout" => (config.fc_dropout * 1e6) as usize,
        "rnn_hidden" => config.rnn_hidden,
        "num_fc" => config.num_fc,
        "fc_reg" => (config.fc_reg * 1e6) as usize,
        _ => 0,
    }
}

/// Orders candidates best first: accuracy, then fewer fields away from the
/// default, then simpler values of the phase's first and second field.
fn better(a: (&StructureConfig, f64), b: (&StructureConfig, f64), fields: (&str, &str)) -> Ordering {
    let d = StructureConfig::default();
    let off = |c: &StructureConfig| [fields.0, fields.1].iter().filter(|f| c.field(f) != d.field(f)).count();
    b.1.total_cmp(&a.1)
        .then(off(a.0).cmp(&off(b.0)))
        .then(simplicity(fields.0, a.0).cmp(&simplicity(fields.0, b.0)))
        .then(simplicity(fields.1, a.0).cmp(&simplicity(fields.1, b.0)))
}

struct Windowed {
    train: Vec<TrainingSample>,
    validation: Vec<TrainingSample>,
}

/// Trains one candidate from scratch; returns the kept validation accuracy
/// and the number of epochs run.
fn train_candidate(
    config: &StructureConfig,
    plan: &SearchPlan,
    epochs: usize,
    data: &Windowed,
    vocab_size: usize,
) -> Result<(f64, usize), ModelError> {
    let seed = candidate_seed(plan.seed, config);
    let mut model = Model::<f32>::build(*config, plan.options, vocab_size, seed)?;
    let opts = TrainOptions { max_epochs: epochs, seed, ..plan.train };
    let history = train(&mut model, &data.train, &data.validation, &opts)?;
    Ok((history.best_accuracy, history.epochs.len()))
}

/// Runs every phase of `plan` on one bin. `on_entry` sees each log entry
/// as it is produced.
pub fn run_search(
    plan: &SearchPlan,
    data: &SearchData,
    vocab: &MoveVocabulary,
    mut on_entry: impl FnMut(&LogEntry),
) -> Result<SearchLog, SearchError> {
    plan.validate()?;
    let assignment = GameAssignment::new(data.records.iter().map(|r| r.source_id.as_str()), data.ratios, data.split_seed);
    let mut windows: HashMap<Memory, Windowed> = HashMap::new();
    let window_for = |windows: &mut HashMap<Memory, Windowed>, m: Memory| -> Result<(), SearchError> {
        if !windows.contains_key(&m) {
            let all = make_bin_samples(data.records, m, &data.bin, data.policy, vocab)?;
            let split = assignment.split(all, data.split_seed);
            if split.train.is_empty() {
                return Err(SearchError::EmptyBin(data.bin.to_string()));
            }
            windows.insert(m, Windowed { train: split.train, validation: split.validation });
        }
        Ok(())
    };
    let mut log = SearchLog::default();
    let mut push = |log: &mut SearchLog, e: LogEntry| {
        on_entry(&e);
        log.entries.push(e);
    };
    let mut incumbent = plan.base;
    let mut incumbent_accuracy = f64::NAN;
    for (phase, (fa, fb)) in plan.phases.iter().enumerate() {
        let phase = phase + 1;
        let mut results: Vec<(StructureConfig, f64)> = Vec::new();
        let mut index = 0;
        for va in plan.candidates_of(fa) {
            for vb in plan.candidates_of(fb) {
                let mut config = incumbent;
                config.set_field(fa, &va)?;
                config.set_field(fb, &vb)?;
                window_for(&mut windows, config.m)?;
                let started = Instant::now();
                let outcome = train_candidate(&config, plan, plan.train.max_epochs, &windows[&config.m], vocab.len());
                let seconds = started.elapsed().as_secs_f64();
                let (accuracy, epochs, error) = match outcome {
                    Ok((acc, epochs)) => {
                        results.push((config, acc));
                        (Some(acc), epochs, None)
                    }
                    Err(e) => (None, 0, Some(e.to_string())),
                };
                let seed = candidate_seed(plan.seed, &config);
                push(&mut log, LogEntry::Candidate { phase, index, config, seed, accuracy, epochs, seconds, error });
                index += 1;
            }
        }
        if let Some(&(winner, accuracy)) =
            results.iter().min_by(|a, b| better((&a.0, a.1), (&b.0, b.1), (fa.as_str(), fb.as_str())))
        {
            incumbent = winner;
            incumbent_accuracy = accuracy;
        }
        push(
            &mut log,
            LogEntry::Phase { phase, fields: (fa.clone(), fb.clone()), winner: incumbent, accuracy: incumbent_accuracy },
        );
    }
    let retrained_accuracy = match plan.final_epochs {
        Some(epochs) => {
            window_for(&mut windows, incumbent.m)?;
            Some(train_candidate(&incumbent, plan, epochs, &windows[&incumbent.m], vocab.len())?.0)
        }
        None => None,
    };
    push(
        &mut log,
        LogEntry::Final {
            bin: data.bin.to_string(),
            config: incumbent,
            accuracy: incumbent_accuracy,
            retrained_accuracy,
        },
    );
    Ok(log)
}

const REPORT_COLUMNS: [&str; 12] = ["Elo Range", "Acc.", "m", "RNN", "RD", "RN", "RA", "BN", "FD", "NF", "FR", "FCA"];

/// Table rows, one per searched bin: range, accuracy and the ten variables.
/// Failed candidates are listed below the table.
pub fn report(logs: &[SearchLog]) -> String {
    let mut rows = vec![REPORT_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut failures = Vec::new();
    for log in logs {
        if let Some((config, accuracy, retrained, bin)) = log.final_entry() {
            let mut row = vec![bin.to_string(), format!("{:.2}", 100.0 * retrained.unwrap_or(accuracy))];
            row.extend(FIELD_NAMES.iter().map(|f| config.field(f).unwrap()));
            rows.push(row);
            for e in &log.entries {
                if let LogEntry::Candidate { phase, index, error: Some(err), .. } = e {
                    failures.push(format!("{bin} phase {phase} candidate {index} failed: {err}"));
                }
            }
        }
    }
    let widths: Vec<usize> = (0..REPORT_COLUMNS.len()).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap()).collect();
    let mut out = String::new();
    for (n, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        if n == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
        }
    }
    for f in failures {
        let _ = writeln!(out, "{f}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_sizes() {
        let plan = SearchPlan::default();
        plan.validate().unwrap();
        assert_eq!(plan.phase_sizes(), vec![16, 12, 8, 20, 16]);
        assert_eq!(plan.phase_sizes().iter().sum::<usize>(), 72);
    }

    #[test]
    fn plan_must_cover_fields_once() {
        let mut plan = SearchPlan::default();
        plan.phases[4].1 = "m".into();
        assert!(plan.validate().is_err());
    }

    #[test]
    fn ties_prefer_default_then_simpler() {
        let d = StructureConfig::default();
        let mut gru = d;
        gru.rnn_kind = RnnKind::Gru;
        let mut m10 = d;
        m10.m = Memory::Steps(10);
        let f = ("m", "rnn_kind");
        assert_eq!(better((&d, 0.5), (&gru, 0.5), f), Ordering::Less);
        let mut gru10 = gru;
        gru10.m = Memory::Steps(10);
        let mut lstm15 = d;
        lstm15.m = Memory::Steps(15);
        assert_eq!(better((&m10, 0.5), (&lstm15, 0.5), f), Ordering::Less);
        assert_eq!(better((&gru10, 0.5), (&m10, 0.5), f), Ordering::Greater);
        assert_eq!(better((&gru10, 0.6), (&d, 0.5), f), Ordering::Less);
    }
}
