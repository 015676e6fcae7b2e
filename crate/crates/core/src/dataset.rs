//! Training corpus construction: Elo bins, windowed (history, next move)
//! samples under a memory capacity, game-disjoint splits and the on-disk
//! dataset directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::movespace::{MoveVocabulary, VocabError};
use crate::notation::{self, GameRecord};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Upper-inclusive Elo interval `(lower, upper]`; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EloBin {
    pub lower: Option<i32>,
    pub upper: Option<i32>,
}

impl EloBin {
    pub fn new(lower: i32, upper: i32) -> Result<EloBin, DatasetError> {
        if lower >= upper {
            return Err(DatasetError::Invalid(format!("empty bin ({lower},{upper}]")));
        }
        Ok(EloBin { lower: Some(lower), upper: Some(upper) })
    }

    /// The single bin used when Elo partitioning is switched off.
    pub const fn everything() -> EloBin {
        EloBin { lower: None, upper: None }
    }

    pub fn contains(&self, elo: i32) -> bool {
        self.lower.is_none_or(|l| elo > l) && self.upper.is_none_or(|u| elo <= u)
    }

    /// The 100-point bins (1000,1100] … (1900,2000].
    pub fn standard_plan() -> Vec<EloBin> {
        (0..10).map(|i| EloBin::new(1000 + 100 * i, 1100 + 100 * i).unwrap()).collect()
    }

    pub fn overlaps(&self, other: &EloBin) -> bool {
        let lo = self.lower.max(other.lower); // None < Some: unbounded lower loses
        let hi = match (self.upper, other.upper) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, None) => a,
            (None, b) => b,
        };
        match (lo, hi) {
            (Some(l), Some(h)) => l < h,
            _ => true,
        }
    }
}

impl fmt::Display for EloBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.lower, self.upper) {
            (None, None) => f.write_str("all"),
            (l, u) => {
                let side = |v: Option<i32>| v.map_or_else(|| "inf".to_string(), |v| v.to_string());
                write!(f, "{}-{}", side(l), side(u))
            }
        }
    }
}

impl FromStr for EloBin {
    type Err = DatasetError;

    /// `all`, `1200-1300`, `inf-1000`, `2000-inf`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "all" {
            return Ok(EloBin::everything());
        }
        let bad = || DatasetError::Invalid(format!("bad bin {s:?}"));
        let (l, u) = s.split_once('-').ok_or_else(bad)?;
        let side = |v: &str| -> Result<Option<i32>, DatasetError> {
            if v == "inf" {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad())
            }
        };
        let bin = EloBin { lower: side(l)?, upper: side(u)? };
        if let (Some(l), Some(u)) = (bin.lower, bin.upper) {
            if l >= u {
                return Err(bad());
            }
        }
        Ok(bin)
    }
}

/// Parses `1000:2000:100` (a range in steps) or a comma list of bins.
pub fn parse_bin_plan(plan: &str) -> Result<Vec<EloBin>, DatasetError> {
    let plan = plan.trim();
    if plan == "standard" {
        return Ok(EloBin::standard_plan());
    }
    let bins = if let [lo, hi, step] = plan.split(':').collect::<Vec<_>>()[..] {
        let p = |v: &str| v.parse::<i32>().map_err(|_| DatasetError::Invalid(format!("bad range {plan:?}")));
        let (lo, hi, step) = (p(lo)?, p(hi)?, p(step)?);
        if step <= 0 || lo >= hi {
            return Err(DatasetError::Invalid(format!("bad range {plan:?}")));
        }
        (lo..hi).step_by(step as usize).map(|l| EloBin::new(l, (l + step).min(hi))).collect::<Result<Vec<_>, _>>()?
    } else {
        plan.split(',').map(EloBin::from_str).collect::<Result<Vec<_>, _>>()?
    };
    for (i, a) in bins.iter().enumerate() {
        if bins[i + 1..].iter().any(|b| a.overlaps(b)) {
            return Err(DatasetError::Invalid(format!("bin {a} overlaps another bin")));
        }
    }
    Ok(bins)
}

/// How many past moves the model may condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Memory {
    Steps(usize),
    /// Perfect memory: the whole game prefix.
    Unbounded,
}

impl Memory {
    pub fn window(self, ply: usize) -> usize {
        let history = ply - 1;
        match self {
            Memory::Steps(m) => history.min(m),
            Memory::Unbounded => history,
        }
    }
}

impl fmt::Display for Memory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Memory::Steps(m) => write!(f, "{m}"),
            Memory::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for Memory {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "perfect" | "unbounded" => Ok(Memory::Unbounded),
            v => match v.parse::<usize>() {
                Ok(m) if m >= 1 => Ok(Memory::Steps(m)),
                _ => Err(DatasetError::Invalid(format!("bad memory {s:?}"))),
            },
        }
    }
}

/// Which plies of a game a bin sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinPolicy {
    /// A ply belongs to the bin of the player who made it.
    #[default]
    PerMover,
    /// Whole games belong to the bin of the players' mean Elo.
    GameAverage,
}

fn mover_elo(record: &GameRecord, ply: usize) -> i32 {
    if ply % 2 == 1 {
        record.red_elo
    } else {
        record.black_elo
    }
}

fn ply_in_bin(record: &GameRecord, ply: usize, bin: &EloBin, policy: BinPolicy) -> bool {
    match policy {
        BinPolicy::PerMover => bin.contains(mover_elo(record, ply)),
        BinPolicy::GameAverage => bin.contains(((record.red_elo as i64 + record.black_elo as i64) / 2) as i32),
    }
}

/// Plies (one-based) of one record visible to a bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinView {
    pub record: usize,
    pub plies: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub bins: Vec<(EloBin, Vec<BinView>)>,
    /// Games with no ply in any bin.
    pub dropped: usize,
}

pub fn partition_by_elo(records: &[GameRecord], bins: &[EloBin], policy: BinPolicy) -> Partition {
    let mut out: Vec<(EloBin, Vec<BinView>)> = bins.iter().map(|b| (*b, Vec::new())).collect();
    let mut dropped = 0;
    for (ri, record) in records.iter().enumerate() {
        let mut any = false;
        for (bin, views) in out.iter_mut() {
            let plies: Vec<usize> =
                (1..=record.moves.len()).filter(|&i| ply_in_bin(record, i, bin, policy)).collect();
            if !plies.is_empty() {
                any = true;
                views.push(BinView { record: ri, plies });
            }
        }
        if !any {
            dropped += 1;
        }
    }
    Partition { bins: out, dropped }
}

/// One (history window, next move) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrainingSample {
    pub x: Vec<u16>,
    pub y: u16,
    pub mover_elo: i32,
    pub game_id: Arc<str>,
    /// One-based ply of `y` in its game.
    pub ply: u32,
}

/// Samples `(x = M[max(1, i-m) .. i-1], y = M[i])` for every ply `i` whose
/// mover lies in `bin`.
pub fn make_samples(
    record: &GameRecord,
    memory: Memory,
    bin: &EloBin,
    policy: BinPolicy,
    vocab: &MoveVocabulary,
) -> Result<Vec<TrainingSample>, DatasetError> {
    let indices = record
        .moves
        .iter()
        .map(|t| vocab.encode(t).map(|i| i as u16))
        .collect::<Result<Vec<_>, _>>()?;
    let game_id: Arc<str> = Arc::from(record.source_id.as_str());
    Ok((1..=indices.len())
        .filter(|&i| ply_in_bin(record, i, bin, policy))
        .map(|i| {
            let start = i - 1 - memory.window(i);
            TrainingSample {
                x: indices[start..i - 1].to_vec(),
                y: indices[i - 1],
                mover_elo: mover_elo(record, i),
                game_id: game_id.clone(),
                ply: i as u32,
            }
        })
        .collect())
}

pub fn make_bin_samples(
    records: &[GameRecord],
    memory: Memory,
    bin: &EloBin,
    policy: BinPolicy,
    vocab: &MoveVocabulary,
) -> Result<Vec<TrainingSample>, DatasetError> {
    let mut out = Vec::new();
    for r in records {
        out.extend(make_samples(r, memory, bin, policy, vocab)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, DatasetError> {
        let r = SplitRatios { train, validation, test };
        if [train, validation, test].iter().any(|v| !(0.0..=1.0).contains(v)) || (train + validation + test - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Invalid(format!("split ratios must be in [0,1] and sum to 1: {r:?}")));
        }
        Ok(r)
    }
}

impl FromStr for SplitRatios {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| DatasetError::Invalid(format!("bad ratios {s:?}")))?;
        match v[..] {
            [a, b, c] => SplitRatios::new(a, b, c),
            _ => Err(DatasetError::Invalid(format!("expected three ratios, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl SplitPart {
    pub fn name(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "validation",
            SplitPart::Test => "test",
        }
    }
}

/// Game-level assignment to splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameAssignment {
    parts: HashMap<Arc<str>, SplitPart>,
}

impl GameAssignment {
    /// Shuffles the sorted distinct ids with `seed` and cuts them by `ratios`.
    pub fn new<'a>(ids: impl IntoIterator<Item = &'a str>, ratios: SplitRatios, seed: u64) -> GameAssignment {
        let mut ids: Vec<&str> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_train = (n as f64 * ratios.train).round() as usize;
        let n_val = ((n as f64 * ratios.validation).round() as usize).min(n - n_train);
        let parts = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| {
                let part = if i < n_train {
                    SplitPart::Train
                } else if i < n_train + n_val {
                    SplitPart::Validation
                } else {
                    SplitPart::Test
                };
                (Arc::from(id), part)
            })
            .collect();
        GameAssignment { parts }
    }

    pub fn part(&self, game_id: &str) -> Option<SplitPart> {
        self.parts.get(game_id).copied()
    }

    pub fn count(&self, part: SplitPart) -> usize {
        self.parts.values().filter(|&&p| p == part).count()
    }

    /// Distributes samples by their game and shuffles within each part.
    pub fn split(&self, samples: Vec<TrainingSample>, seed: u64) -> DatasetSplit {
        let mut split = DatasetSplit { seed, ..Default::default() };
        for s in samples {
            match self.part(&s.game_id) {
                Some(SplitPart::Train) => split.train.push(s),
                Some(SplitPart::Validation) => split.validation.push(s),
                Some(SplitPart::Test) => split.test.push(s),
                None => {}
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SHUFFLE_SALT);
        for part in [&mut split.train, &mut split.validation, &mut split.test] {
            // canonical order first so the shuffle does not depend on input order
            part.sort_by(|a, b| (&a.game_id, a.ply).cmp(&(&b.game_id, b.ply)));
            part.shuffle(&mut rng);
        }
        split
    }
}

// keeps the per-split shuffle stream distinct from the game shuffle
const SPLIT_SHUFFLE_SALT: u64 = 0x5eed_5011;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<TrainingSample>,
    pub validation: Vec<TrainingSample>,
    pub test: Vec<TrainingSample>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn part(&self, part: SplitPart) -> &[TrainingSample] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }
}

pub fn build_split(samples: Vec<TrainingSample>, ratios: SplitRatios, seed: u64) -> DatasetSplit {
    let assignment = GameAssignment::new(samples.iter().map(|s| &*s.game_id), ratios, seed);
    assignment.split(samples, seed)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    /// Samples per bin label, in the order the bins were given.
    pub per_bin: Vec<(String, usize)>,
    /// Label index -> number of samples with that target.
    pub label_histogram: BTreeMap<u16, usize>,
    pub mean_history: f64,
}

pub fn dataset_stats(samples: &[TrainingSample], bins: &[EloBin]) -> DatasetStats {
    let mut stats = DatasetStats {
        count: samples.len(),
        per_bin: bins.iter().map(|b| (b.to_string(), 0)).collect(),
        ..Default::default()
    };
    let mut total_x = 0usize;
    for s in samples {
        *stats.label_histogram.entry(s.y).or_default() += 1;
        total_x += s.x.len();
        for (i, b) in bins.iter().enumerate() {
            if b.contains(s.mover_elo) {
                stats.per_bin[i].1 += 1;
            }
        }
    }
    if !samples.is_empty() {
        stats.mean_history = total_x as f64 / samples.len() as f64;
    }
    stats
}

/// game id -> full move sequence, used to rebuild positions for the filter.
#[derive(Debug, Clone, Default)]
pub struct GameIndex {
    games: HashMap<Arc<str>, Vec<crate::movespace::MoveToken>>,
}

impl GameIndex {
    pub fn new(records: &[GameRecord]) -> GameIndex {
        GameIndex {
            games: records.iter().map(|r| (Arc::from(r.source_id.as_str()), r.moves.clone())).collect(),
        }
    }

    pub fn moves(&self, game_id: &str) -> Option<&[crate::movespace::MoveToken]> {
        self.games.get(game_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }
}

const SAMPLE_MAGIC: &[u8; 8] = b"XQSMPL01";

/// Binary sample file: magic, u32 count, then per sample
/// `u16 y, i32 elo, u32 ply, u16 id_len, id, u16 x_len, x_len * u16`, little endian.
pub fn encode_samples(samples: &[TrainingSample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + samples.len() * 32);
    out.extend_from_slice(SAMPLE_MAGIC);
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.y.to_le_bytes());
        out.extend_from_slice(&s.mover_elo.to_le_bytes());
        out.extend_from_slice(&s.ply.to_le_bytes());
        out.extend_from_slice(&(s.game_id.len() as u16).to_le_bytes());
        out.extend_from_slice(s.game_id.as_bytes());
        out.extend_from_slice(&(s.x.len() as u16).to_le_bytes());
        for v in &s.x {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<TrainingSample>, DatasetError> {
    let bad = |m: &str| DatasetError::Invalid(format!("sample file: {m}"));
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8], DatasetError> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (a, b) = cur.split_at(n);
        cur = b;
        Ok(a)
    };
    if take(8)? != SAMPLE_MAGIC {
        return Err(bad("bad magic"));
    }
    let u16le = |b: &[u8]| u16::from_le_bytes([b[0], b[1]]);
    let u32le = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let count = u32le(take(4)?) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut ids: HashMap<String, Arc<str>> = HashMap::new();
    for _ in 0..count {
        let y = u16le(take(2)?);
        let mover_elo = u32le(take(4)?) as i32;
        let ply = u32le(take(4)?);
        let id_len = u16le(take(2)?) as usize;
        let id = std::str::from_utf8(take(id_len)?).map_err(|_| bad("id is not UTF-8"))?.to_string();
        let x_len = u16le(take(2)?) as usize;
        let x = take(2 * x_len)?.chunks_exact(2).map(u16le).collect();
        let game_id = ids.entry(id.clone()).or_insert_with(|| Arc::from(id.as_str())).clone();
        out.push(TrainingSample { x, y, mover_elo, game_id, ply });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinManifest {
    pub bin: String,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub memory: String,
    pub policy: BinPolicy,
    pub ratios: SplitRatios,
    pub vocabulary_sha256: String,
    pub vocabulary_size: usize,
    pub games: usize,
    pub dropped_games: usize,
    pub bins: Vec<BinManifest>,
}

pub const VOCAB_FILE: &str = "vocabulary.txt";
pub const GAMES_FILE: &str = "games.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sample_file_name(bin: &EloBin, part: SplitPart) -> String {
    format!("{bin}.{}.bin", part.name())
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Options for [`prepare_dataset`].
#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub bins: Vec<EloBin>,
    pub memory: Memory,
    pub ratios: SplitRatios,
    pub seed: u64,
    pub policy: BinPolicy,
}

/// Writes the vocabulary, the canonical game file, per-bin split sample
/// files and the manifest into `dir`.
pub fn prepare_dataset(
    dir: &Path,
    records: &[GameRecord],
    vocab: &MoveVocabulary,
    opts: &PrepareOptions,
) -> Result<DatasetManifest, DatasetError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(VOCAB_FILE), vocab.manifest())?;
    fs::write(dir.join(GAMES_FILE), notation::serialize_record_file(records))?;
    let usable: Vec<GameRecord> = records.iter().filter(|r| !r.moves.is_empty()).cloned().collect();
    let partition = partition_by_elo(&usable, &opts.bins, opts.policy);
    let assignment = GameAssignment::new(usable.iter().map(|r| r.source_id.as_str()), opts.ratios, opts.seed);
    let mut bins = Vec::new();
    for (bin, views) in &partition.bins {
        let mut samples = Vec::new();
        for v in views {
            samples.extend(make_samples(&usable[v.record], opts.memory, bin, opts.policy, vocab)?);
        }
        let split = assignment.split(samples, opts.seed);
        for part in [SplitPart::Train, SplitPart::Validation, SplitPart::Test] {
            fs::write(dir.join(sample_file_name(bin, part)), encode_samples(split.part(part)))?;
        }
        bins.push(BinManifest {
            bin: bin.to_string(),
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        });
    }
    let manifest = DatasetManifest {
        seed: opts.seed,
        memory: opts.memory.to_string(),
        policy: opts.policy,
        ratios: opts.ratios,
        vocabulary_sha256: to_hex(&vocab.hash()),
        vocabulary_size: vocab.len(),
        games: usable.len(),
        dropped_games: partition.dropped,
        bins,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

/// A prepared dataset directory loaded back into memory.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub manifest: DatasetManifest,
    pub vocabulary: MoveVocabulary,
    pub records: Vec<GameRecord>,
}

impl DatasetDir {
    pub fn open(dir: &Path) -> Result<DatasetDir, DatasetError> {
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
            .map_err(|e| DatasetError::Invalid(format!("manifest: {e}")))?;
        let vocabulary = MoveVocabulary::from_manifest(&fs::read_to_string(dir.join(VOCAB_FILE))?)
            .map_err(|e| DatasetError::Invalid(format!("vocabulary: {e}")))?;
        if to_hex(&vocabulary.hash()) != manifest.vocabulary_sha256 {
            return Err(DatasetError::Invalid("vocabulary does not match manifest hash".into()));
        }
        let (file, diags) = notation::parse_record_file(&fs::read(dir.join(GAMES_FILE))?)
            .map_err(|e| DatasetError::Invalid(format!("games: {e}")))?;
        if let Some(d) = diags.first() {
            return Err(DatasetError::Invalid(format!("games file: {d}")));
        }
        Ok(DatasetDir { manifest, vocabulary, records: file.records })
    }

    pub fn samples(&self, dir: &Path, bin: &EloBin, part: SplitPart) -> Result<Vec<TrainingSample>, DatasetError> {
        decode_samples(&fs::read(dir.join(sample_file_name(bin, part)))?)
    }

    pub fn split(&self, dir: &Path, bin: &EloBin) -> Result<DatasetSplit, DatasetError> {
        Ok(DatasetSplit {
            train: self.samples(dir, bin, SplitPart::Train)?,
            validation: self.samples(dir, bin, SplitPart::Validation)?,
            test: self.samples(dir, bin, SplitPart::Test)?,
            seed: self.manifest.seed,
        })
    }

    pub fn bins(&self) -> Result<Vec<EloBin>, DatasetError> {
        self.manifest.bins.iter().map(|b| b.bin.parse()).collect()
    }

    pub fn memory(&self) -> Result<Memory, DatasetError> {
        self.manifest.memory.parse()
    }

    pub fn game_index(&self) -> GameIndex {
        GameIndex::new(&self.records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::movespace::MoveVocabulary;
    use crate::notation::GameResult;
    use crate::rules::initial_state;

    fn record(id: &str, red: i32, black: i32, plies: usize) -> GameRecord {
        let mut state = initial_state();
        let mut moves = Vec::new();
        for _ in 0..plies {
            let a = state.legal_moves()[0];
            moves.push(crate::movespace::tokenize(a, &state).unwrap());
            state = state.apply_move(a).unwrap();
        }
        GameRecord { source_id: id.into(), red_elo: red, black_elo: black, result: GameResult::Unknown, moves }
    }

    #[test]
    fn bins_are_upper_inclusive() {
        let b = EloBin::new(1200, 1300).unwrap();
        assert!(b.contains(1300));
        assert!(!b.contains(1200));
        assert!(EloBin::everything().contains(i32::MIN));
        assert_eq!(b.to_string(), "1200-1300");
        assert_eq!("1200-1300".parse::<EloBin>().unwrap(), b);
        assert_eq!("all".parse::<EloBin>().unwrap(), EloBin::everything());
        assert_eq!(parse_bin_plan("1000:2000:100").unwrap(), EloBin::standard_plan());
        assert!(parse_bin_plan("1000-1200,1100-1300").is_err());
    }

    #[test]
    fn per_mover_partition() {
        let r = record("g", 1250, 1540, 6);
        let p = partition_by_elo(&[r], &EloBin::standard_plan(), BinPolicy::PerMover);
        let find = |label: &str| p.bins.iter().find(|(b, _)| b.to_string() == label).unwrap().1.clone();
        assert_eq!(find("1200-1300")[0].plies, vec![1, 3, 5]);
        assert_eq!(find("1500-1600")[0].plies, vec![2, 4, 6]);
        assert_eq!(p.dropped, 0);
        let r = record("h", 900, 2500, 2);
        assert_eq!(partition_by_elo(&[r], &EloBin::standard_plan(), BinPolicy::PerMover).dropped, 1);
    }

    #[test]
    fn windows_follow_memory() {
        let vocab = MoveVocabulary::standard();
        let r = record("g", 1500, 1500, 3);
        let s = make_samples(&r, Memory::Steps(5), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        assert_eq!(s.iter().map(|s| s.x.len()).collect::<Vec<_>>(), [0, 1, 2]);
        let r = record("g", 1500, 1500, 30);
        let s = make_samples(&r, Memory::Steps(5), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        assert!(s.iter().filter(|s| s.ply > 5).all(|s| s.x.len() == 5));
        let s = make_samples(&r, Memory::Unbounded, &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        assert!(s.iter().all(|s| s.x.len() == s.ply as usize - 1));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let vocab = MoveVocabulary::standard();
        let records: Vec<_> = (0..100).map(|i| record(&format!("g{i:03}"), 1500, 1500, 4)).collect();
        let samples = make_bin_samples(&records, Memory::Steps(5), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        let a = build_split(samples.clone(), SplitRatios::default(), 9);
        let b = build_split(samples, SplitRatios::default(), 9);
        assert_eq!(a, b);
        let games = |v: &[TrainingSample]| v.iter().map(|s| s.game_id.clone()).collect::<BTreeSet<_>>();
        let (tr, va, te) = (games(&a.train), games(&a.validation), games(&a.test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        assert!(tr.len().abs_diff(80) <= 1 && va.len().abs_diff(10) <= 1 && te.len().abs_diff(10) <= 1);
    }

    #[test]
    fn stats() {
        let empty = dataset_stats(&[], &[]);
        assert_eq!(empty.count, 0);
        assert_eq!(empty.mean_history, 0.0);
        let vocab = MoveVocabulary::standard();
        let r = record("g", 1250, 1250, 3);
        let s = make_samples(&r, Memory::Steps(5), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        let st = dataset_stats(&s, &EloBin::standard_plan());
        assert_eq!(st.count, 3);
        assert_eq!(st.mean_history, 1.0);
        assert_eq!(st.label_histogram.values().sum::<usize>(), 3);
        assert_eq!(st.per_bin[2], ("1200-1300".to_string(), 3));
    }

    #[test]
    fn sample_file_round_trip() {
        let vocab = MoveVocabulary::standard();
        let r = record("game one", 1250, 1700, 12);
        let s = make_samples(&r, Memory::Steps(5), &EloBin::everything(), BinPolicy::PerMover, vocab).unwrap();
        assert_eq!(decode_samples(&encode_samples(&s)).unwrap(), s);
        assert!(decode_samples(&encode_samples(&s)[..20]).is_err());
    }
}
