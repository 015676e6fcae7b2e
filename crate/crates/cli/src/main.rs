use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use xqmimic_core::dataset::{
    parse_bin_plan, prepare_dataset, BinPolicy, DatasetDir, EloBin, PrepareOptions, SplitPart,
    GAMES_FILE,
};
use xqmimic_core::eval::{cross_elo_matrix, evaluate, matrix_table};
use xqmimic_core::model::train::train_with_progress;
use xqmimic_core::model::{load, save, CheckpointMeta, Model, ModelOptions, StructureConfig, TrainOptions};
use xqmimic_core::notation::{parse_record_file, serialize_record_file, GameRecord};
use xqmimic_core::search::{report, run_search, LogEntry, SearchData, SearchPlan};
use xqmimic_core::MoveVocabulary;
use xqmimic_serve::{AppState, Registry, SessionStore};

#[derive(Parser)]
#[command(name = "xqmimic", version, about = "Elo-conditioned Xiangqi move prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse record files into a dataset directory.
    Ingest(IngestArgs),
    /// Partition, window and split the ingested games.
    Prepare(PrepareArgs),
    /// Train one model on one bin.
    Train(TrainArgs),
    /// Search structure variables for one bin.
    Search(SearchArgs),
    /// Score checkpoints on test samples.
    Eval(EvalArgs),
    /// Run the HTTP play and analysis service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Fail on the first dropped game instead of reporting it.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    PerMover,
    GameAverage,
}

#[derive(Args)]
struct PrepareArgs {
    /// Dataset directory written by `ingest`.
    #[arg(long)]
    dataset: PathBuf,
    /// `standard`, `lo:hi:step`, or a comma list such as `1000-1100,1100-1200`.
    #[arg(long, default_value = "standard")]
    bins: String,
    /// History length m, or `inf`.
    #[arg(long, default_value = "20")]
    memory: String,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "per-mover")]
    policy: PolicyArg,
}

#[derive(Args, Clone)]
struct ScaleArgs {
    #[arg(long, default_value_t = ModelOptions::default().embedding_dim)]
    embedding_dim: usize,
    /// Divide every hidden width by this for quick runs.
    #[arg(long, default_value_t = 1)]
    hidden_divisor: usize,
    #[arg(long)]
    one_hot: bool,
    #[arg(long, default_value_t = TrainOptions::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainOptions::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainOptions::default().patience)]
    patience: usize,
}

impl ScaleArgs {
    fn options(&self) -> ModelOptions {
        ModelOptions { embedding_dim: self.embedding_dim, one_hot: self.one_hot, hidden_divisor: self.hidden_divisor }
    }

    fn train(&self, epochs: usize, seed: u64) -> TrainOptions {
        TrainOptions {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            max_epochs: epochs,
            patience: self.patience,
            seed,
            ..TrainOptions::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// `key=value` lines; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Bin to train on; required when the dataset has several.
    #[arg(long)]
    bin: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TrainOptions::default().max_epochs)]
    epochs: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scale: ScaleArgs,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    bin: Option<String>,
    /// JSON search plan; missing fields take the default plan's values.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Epochs per candidate; overrides the plan.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Line-delimited JSON log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint; repeat for a cross-Elo matrix.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Test bin; defaults to the bin the checkpoint was trained on.
    #[arg(long)]
    bin: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    p: Vec<f64>,
    #[arg(long)]
    no_filter: bool,
    /// Top-1 of every model on every bin of the dataset.
    #[arg(long)]
    matrix: bool,
    /// Structured report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Accuracy curves as CSV.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    models_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Directory for session logs; sessions there are restored at start.
    #[arg(long)]
    persist: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train_cmd(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut records: Vec<GameRecord> = Vec::new();
    let mut seen = HashSet::new();
    let mut dropped = 0;
    for path in &a.inputs {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let (file, diags) = parse_record_file(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        for d in &diags {
            if a.strict {
                bail!("{}: {d}", path.display());
            }
            eprintln!("{}: dropped: {d}", path.display());
        }
        dropped += diags.len();
        for r in file.records {
            if !seen.insert(r.source_id.clone()) {
                if a.strict {
                    bail!("{}: duplicate game id {:?}", path.display(), r.source_id);
                }
                eprintln!("{}: dropped duplicate game id {:?}", path.display(), r.source_id);
                dropped += 1;
                continue;
            }
            records.push(r);
        }
    }
    fs::create_dir_all(&a.output)?;
    fs::write(a.output.join(GAMES_FILE), serialize_record_file(&records))?;
    println!("{} games kept, {dropped} dropped -> {}", records.len(), a.output.join(GAMES_FILE).display());
    Ok(())
}

fn read_games(dir: &Path) -> Result<Vec<GameRecord>> {
    let path = dir.join(GAMES_FILE);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let (file, diags) = parse_record_file(&bytes)?;
    if let Some(d) = diags.first() {
        bail!("{}: {d}", path.display());
    }
    Ok(file.records)
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let records = read_games(&a.dataset)?;
    let opts = PrepareOptions {
        bins: parse_bin_plan(&a.bins)?,
        memory: a.memory.parse()?,
        ratios: a.ratios.parse()?,
        seed: a.seed,
        policy: match a.policy {
            PolicyArg::PerMover => BinPolicy::PerMover,
            PolicyArg::GameAverage => BinPolicy::GameAverage,
        },
    };
    let manifest = prepare_dataset(&a.dataset, &records, MoveVocabulary::standard(), &opts)?;
    println!("{} games, {} outside every bin, m={}", manifest.games, manifest.dropped_games, manifest.memory);
    println!("{:>12} {:>9} {:>9} {:>9}", "bin", "train", "valid", "test");
    for b in &manifest.bins {
        println!("{:>12} {:>9} {:>9} {:>9}", b.bin, b.train, b.validation, b.test);
    }
    Ok(())
}

fn pick_bin(data: &DatasetDir, requested: Option<&str>) -> Result<EloBin> {
    let bins = data.bins()?;
    match requested {
        Some(b) => {
            let bin: EloBin = b.parse()?;
            if !bins.contains(&bin) {
                bail!("bin {bin} is not in the dataset (have {})", list(&bins));
            }
            Ok(bin)
        }
        None if bins.len() == 1 => Ok(bins[0]),
        None => bail!("the dataset has several bins ({}); pass --bin", list(&bins)),
    }
}

fn list(bins: &[EloBin]) -> String {
    bins.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = DatasetDir::open(&a.dataset)?;
    let bin = pick_bin(&data, a.bin.as_deref())?;
    let config: StructureConfig = match &a.config {
        Some(p) => fs::read_to_string(p)?.parse()?,
        None => StructureConfig::default(),
    };
    if config.m > data.memory()? {
        bail!("config asks for m={} but the dataset was windowed with m={}", config.m, data.memory()?);
    }
    let split = data.split(&a.dataset, &bin)?;
    let mut model = Model::<f32>::build(config, a.scale.options(), data.vocabulary.len(), a.seed)?;
    let opts = a.scale.train(a.epochs, a.seed);
    let history = train_with_progress(&mut model, &split.train, &split.validation, &opts, |e| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  validation {}  {:.1}s",
            e.epoch,
            e.train_loss,
            e.validation_accuracy.map_or("-".into(), |v| format!("{:.4}", v)),
            e.seconds
        );
    })?;
    let mut meta = CheckpointMeta::new();
    meta.insert("bin".into(), bin.to_string());
    meta.insert("accuracy".into(), history.best_accuracy.to_string());
    meta.insert("epochs".into(), history.best_epoch.to_string());
    meta.insert("seed".into(), a.seed.to_string());
    fs::write(&a.out, save(&model, &data.vocabulary, &meta))?;
    println!(
        "kept epoch {} of {} ({:?}), {} top-1 {:.4} -> {}",
        history.best_epoch,
        history.epochs.len(),
        history.stop,
        if split.validation.is_empty() { "training" } else { "validation" },
        history.best_accuracy,
        a.out.display()
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let data = DatasetDir::open(&a.dataset)?;
    let bin = pick_bin(&data, a.bin.as_deref())?;
    let mut plan: SearchPlan = match &a.plan {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("plan {}", p.display()))?,
        None => SearchPlan::default(),
    };
    if let Some(b) = a.budget {
        plan.train.max_epochs = b;
    }
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    plan.validate()?;
    eprintln!("phase sizes {:?}", plan.phase_sizes());
    let search_data = SearchData {
        records: &data.records,
        bin,
        policy: data.manifest.policy,
        ratios: data.manifest.ratios,
        split_seed: data.manifest.seed,
    };
    let log = run_search(&plan, &search_data, &data.vocabulary, |e| match e {
        LogEntry::Candidate { phase, index, accuracy, seconds, error, .. } => match (accuracy, error) {
            (Some(acc), _) => eprintln!("phase {phase} #{index}: {acc:.4} ({seconds:.1}s)"),
            (None, e) => eprintln!("phase {phase} #{index}: failed: {}", e.as_deref().unwrap_or("?")),
        },
        LogEntry::Phase { phase, winner, accuracy, .. } => {
            let c: Vec<String> = winner.non_default_fields().iter().map(|f| format!("{f}={}", winner.field(f).unwrap())).collect();
            eprintln!("phase {phase} winner {accuracy:.4} [{}]", c.join(" "));
        }
        LogEntry::Final { .. } => {}
    })?;
    fs::write(&a.out, log.to_jsonl())?;
    print!("{}", report(std::slice::from_ref(&log)));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let data = DatasetDir::open(&a.dataset)?;
    let games = data.game_index();
    let mut models = Vec::new();
    for path in &a.model {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let (model, meta) = load(&bytes, &data.vocabulary).with_context(|| format!("loading {}", path.display()))?;
        if model.config.m > data.memory()? {
            bail!("{} uses m={} but the dataset was windowed with m={}", path.display(), model.config.m, data.memory()?);
        }
        models.push((path, model, meta));
    }
    let use_filter = !a.no_filter;
    let mut reports = Vec::new();
    let mut out = String::new();
    if a.matrix {
        let bins = data.bins()?;
        let tests = bins.iter().map(|b| data.samples(&a.dataset, b, SplitPart::Test)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&Model> = models.iter().map(|(_, m, _)| m).collect();
        let sets: Vec<&[_]> = tests.iter().map(|t| t.as_slice()).collect();
        let matrix = cross_elo_matrix(&refs, &sets, &games, &data.vocabulary, use_filter)?;
        let labels: Vec<String> = bins.iter().map(|b| b.to_string()).collect();
        out.push_str(&matrix_table(&labels, &matrix));
        let rows: Vec<String> = models
            .iter()
            .map(|(p, _, meta)| format!("{}: {}", p.display(), meta.get("bin").map_or("?", |b| b.as_str())))
            .collect();
        out.push_str(&format!("rows: {}\n", rows.join("; ")));
        if let Some(path) = &a.report {
            let json = serde_json::json!({ "bins": labels, "models": a.model, "filtered": use_filter, "top1": matrix });
            fs::write(path, serde_json::to_string_pretty(&json)?)?;
        }
    } else {
        for (path, model, meta) in &models {
            let bin = match (&a.bin, meta.get("bin")) {
                (Some(b), _) | (None, Some(b)) => b.parse::<EloBin>()?,
                (None, None) => pick_bin(&data, None)?,
            };
            let test = data.samples(&a.dataset, &bin, SplitPart::Test)?;
            let mut r = evaluate(model, &test, &games, &data.vocabulary, &a.k, &a.p, use_filter)?;
            r.label = format!("{} on {bin}", path.display());
            out.push_str(&r.table());
            if r.anomalies > 0 {
                out.push_str(&format!("{} samples skipped: position could not be rebuilt\n", r.anomalies));
            }
            reports.push(r);
        }
        if let Some(path) = &a.report {
            fs::write(path, serde_json::to_string_pretty(&reports)?)?;
        }
        if let Some(path) = &a.plot {
            let mut csv = String::from("model,curve,x,accuracy\n");
            for r in &reports {
                for line in r.csv().lines().skip(1) {
                    csv.push_str(&format!("{},{line}\n", r.label.replace(',', ";")));
                }
            }
            fs::write(path, csv)?;
        }
    }
    print!("{out}");
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let registry = Registry::scan(&a.models_dir, MoveVocabulary::standard())
        .with_context(|| format!("scanning {}", a.models_dir.display()))?;
    for d in registry.descriptors() {
        match &d.error {
            Some(e) => eprintln!("model {}: not loadable: {e}", d.id),
            None => eprintln!("model {}: {} [{}]", d.id, d.elo_range.as_deref().unwrap_or("no bin"), d.config),
        }
    }
    let store = a.persist.as_deref().map(SessionStore::open).transpose()?;
    let (state, broken) = AppState::new(registry, store)?;
    for b in broken {
        eprintln!("session log skipped: {b}");
    }
    eprintln!("listening on {}", a.addr);
    tokio::runtime::Runtime::new()?.block_on(xqmimic_serve::serve(&a.addr, state))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use xqmimic_core::dataset::Memory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn memory_order_matches_window_lengths() {
        assert!(Memory::Steps(5) < Memory::Steps(20));
        assert!(Memory::Steps(20) < Memory::Unbounded);
    }
}
