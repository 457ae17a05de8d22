//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::ablation::run_ablation;
use crate::data::{load_dataset, make_splits, preprocess_filter, FilterThresholds, SplitCounts};
use crate::diagnostics::{model_gradient_check, GradCheckCase};
use crate::error::{Error, Result};
use crate::eval::{BaselineMode, EvalSplit};
use crate::persist::SPLITS_FILE;
use crate::pipeline::{task_for_training, train_to_dir, LoadedModel};
use crate::training::TrainConfig;

/// Gradient-check tolerance on the max relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "taggnn", version, about = "Item tagging with query-item-tag graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply the degree and word-frequency filters to a dataset directory.
    Preprocess(PreprocessArgs),
    /// Draw a train/validation/test split and write splits.tsv.
    Split(SplitArgs),
    /// Train a model and write a model directory.
    Train(TrainArgs),
    /// Evaluate a model directory and write a JSON report.
    Eval(EvalArgs),
    /// Print the top-K tags for one item.
    Predict(PredictArgs),
    /// Finite-difference check of the model gradients.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate the ablation grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    item_min_queries: usize,
    #[arg(long, default_value_t = 20)]
    query_min_items: usize,
    #[arg(long, default_value_t = 5)]
    item_min_tags: usize,
    #[arg(long, default_value_t = 15)]
    tag_min_items: usize,
    #[arg(long, default_value_t = 5)]
    word_min_count: usize,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    train: usize,
    #[arg(long)]
    val: usize,
    #[arg(long)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to DATA/splits.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    ItemOnly,
    ItemPlusQueries,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Train a bag-of-words baseline instead of the graph model.
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Validation,
    Test,
}

impl From<SplitArg> for EvalSplit {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Validation => EvalSplit::Validation,
            SplitArg::Test => EvalSplit::Test,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Defaults to the directory recorded at training time.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    k: Vec<usize>,
    /// Writes the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Drop completion items' known-tag edges before scoring.
    #[arg(long)]
    remove_known_tags: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Defaults to the directory recorded at training time.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    item_id: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Number of random instances; the first is the fixed default.
    #[arg(long, default_value_t = 1)]
    instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    k: Vec<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Add the two bag-of-words baselines as rows.
    #[arg(long)]
    baselines: bool,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code: 0 success, 1 invalid input, 2 numerical
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Preprocess(a) => preprocess(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Ablate(a) => ablate(a),
    }
    .map(|()| 0)
    .or_else(|e| match e {
        CmdError::Fail(code) => Ok(code),
        CmdError::Err(e) => Err(e),
    })
}

enum CmdError {
    /// Command ran but reports failure with this exit code.
    Fail(i32),
    Err(Error),
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        CmdError::Err(e)
    }
}

type CmdResult = std::result::Result<(), CmdError>;

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::from_json(&text)
}

fn preprocess(a: PreprocessArgs) -> CmdResult {
    let ds = load_dataset(&a.data)?;
    let th = FilterThresholds {
        item_min_queries: a.item_min_queries,
        query_min_items: a.query_min_items,
        item_min_tags: a.item_min_tags,
        tag_min_items: a.tag_min_items,
        word_min_count: a.word_min_count,
    };
    let out = preprocess_filter(&ds, &th)?;
    out.save(&a.out)?;
    println!(
        "items {} -> {}, queries {} -> {}, tags {} -> {}",
        ds.items.len(),
        out.items.len(),
        ds.queries.len(),
        out.queries.len(),
        ds.tags.len(),
        out.tags.len()
    );
    Ok(())
}

fn split(a: SplitArgs) -> CmdResult {
    let ds = load_dataset(&a.data)?;
    let counts = SplitCounts {
        train: a.train,
        val: a.val,
        test: a.test,
    };
    let splits = make_splits(&ds, counts, a.seed)?;
    let out = a.out.unwrap_or_else(|| a.data.join(SPLITS_FILE));
    splits.save(&out, &ds)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let cfg = read_config(&a.config)?;
    let mode = a.baseline.map(|b| match b {
        BaselineArg::ItemOnly => BaselineMode::ItemOnly,
        BaselineArg::ItemPlusQueries => BaselineMode::ItemPlusQueries,
    });
    info!("training from {}", a.data.display());
    let (model, log) = train_to_dir(&cfg, &a.data, &a.out, mode)?;
    println!(
        "trained {} for {} epochs (best {}), wrote {}",
        model.name(),
        log.epochs.len(),
        log.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("--k values must be positive"));
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CmdResult {
    check_ks(&a.k)?;
    let loaded = LoadedModel::open(&a.model, a.data.as_deref())?;
    let json = loaded.report(a.split.into(), &a.k, a.remove_known_tags)?.to_json()?;
    match &a.report {
        Some(path) => {
            write_file(path, &json)?;
            println!("wrote {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn predict(a: PredictArgs) -> CmdResult {
    check_ks(&[a.k])?;
    let loaded = LoadedModel::open(&a.model, a.data.as_deref())?;
    for (t, score) in loaded.predict(&a.item_id, a.k)? {
        let tag = &loaded.task.dataset.tags[t];
        println!("{}\t{score:.6}\t{}", tag.id, tag.text);
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let mut worst = 0.0f64;
    for n in 0..a.instances.max(1) {
        let case = GradCheckCase {
            seed: a.seed + n,
            ..GradCheckCase::default()
        };
        worst = worst.max(model_gradient_check(&case)?);
    }
    println!("max relative error: {worst:.3e}");
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        eprintln!("gradient check failed (tolerance {GRADCHECK_TOLERANCE:e})");
        Err(CmdError::Fail(2))
    }
}

fn ablate(a: AblateArgs) -> CmdResult {
    check_ks(&a.k)?;
    let cfg = read_config(&a.config)?;
    let task = task_for_training(&a.data, &cfg)?;
    let report = run_ablation(&task, &cfg, a.split.into(), &a.k, a.baselines, |name| info!("ablation: {name}"))?;
    print!("{}", report.to_table(&a.k));
    if let Some(path) = &a.report {
        write_file(path, &report.to_json()?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
