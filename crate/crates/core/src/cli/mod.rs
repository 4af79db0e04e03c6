//! The `shrinknet` command line: `gen`, `train`, `eval` and `bench`.
//!
//! Each command accepts `--config <file>` with `key=value` lines named
//! after its long flags; flags given on the command line take precedence.
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! format error, 3 numeric failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

pub use config::{expand_config, parse_config, read_config, resolved_config};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{count_flops, load_checkpoint, save_checkpoint, AmcModel, Checkpoint, ModelConfig};
use crate::nn::Mode;
use crate::shrinkage::{bias_mse_experiment, ThresholdPaths, Thresholding};
use crate::signal::{
    parse_snr_grid, read_manifest, read_sigset, stratified_split, write_manifest, write_sigset, Dataset, DatasetSpec,
    Modulation, Split,
};
use crate::train::{
    evaluate, summary_text, time_inference, write_eval_report, write_history, Examples, ModelTrainer, TrainConfig,
};

const DEFAULT_CLASSES: &str = "bpsk,qpsk,8psk,16qam,pam4,4ask,cpfsk,gfsk";
pub const CHECKPOINT_FILE: &str = "model.amcw";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "shrinknet", version, about = "Residual shrinkage networks for modulation classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a labeled dataset into a SIGSET file plus split manifest.
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Train a classifier and save its best checkpoint.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Evaluate a checkpoint per SNR.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Parameter, FLOP, timing and thresholding-bias tables.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    /// key=value file of defaults for these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated modulation classes.
    #[arg(long, default_value = DEFAULT_CLASSES)]
    pub classes: String,
    /// `start:end:step` or a comma list, in dB.
    #[arg(long, default_value = "-20:18:4", allow_hyphen_values = true)]
    pub snrs: String,
    #[arg(long, default_value_t = 500)]
    pub per_cell: usize,
    #[arg(long, default_value_t = 128)]
    pub length: usize,
    /// Samples per symbol.
    #[arg(long, default_value_t = 8)]
    pub sps: usize,
    #[arg(long, default_value_t = 0.35)]
    pub rolloff: f64,
    /// Largest carrier offset, cycles per sample.
    #[arg(long, default_value_t = 0.01)]
    pub cfo_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Split manifest path; defaults to the output with a `.manifest` extension.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Single worker thread.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// SIGSET dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Split manifest; defaults to the dataset's `.manifest` sibling, or a
    /// fresh stratified split when that does not exist.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "dual")]
    pub variant: ThresholdPaths,
    #[arg(long, default_value = "garrote")]
    pub threshold: Thresholding,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// L2 coefficient on convolution and dense kernels.
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 5)]
    pub plateau_window: usize,
    #[arg(long, default_value_t = 30)]
    pub early_stop_window: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub min_delta: f64,
    /// Seeds weight initialization and batch shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expected class count; an error if the dataset disagrees.
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub deterministic: bool,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: EvalSplit,
    #[arg(long)]
    pub out: PathBuf,
    /// Timed single-sample forwards.
    #[arg(long, default_value_t = 1000)]
    pub timing_runs: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Benchmark this checkpoint instead of a freshly initialized model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub params: bool,
    #[arg(long)]
    pub flops: bool,
    #[arg(long)]
    pub timing: bool,
    /// Monte-Carlo bias/MSE of soft vs garrote thresholding.
    #[arg(long)]
    pub bias_experiment: bool,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Capture lengths for the FLOP table.
    #[arg(long, default_value = "128,1024", value_delimiter = ',')]
    pub lengths: Vec<usize>,
    #[arg(long, default_value = "dual")]
    pub variant: ThresholdPaths,
    #[arg(long, default_value = "garrote")]
    pub threshold: Thresholding,
    #[arg(long, default_value_t = 8)]
    pub num_classes: usize,
    #[arg(long, default_value_t = 128)]
    pub length: usize,
    #[arg(long, default_value_t = 1000)]
    pub timing_runs: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    /// Also write the tables to `<out>/bench.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub deterministic: bool,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_numeric_error() {
        3
    } else if err.is_data_error() {
        2
    } else {
        1
    }
}

/// Worker count: 1 under `--deterministic`, else `SHRINKNET_THREADS` or
/// the available parallelism.
pub fn worker_threads(deterministic: bool) -> Result<usize> {
    if deterministic {
        return Ok(1);
    }
    match std::env::var("SHRINKNET_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("SHRINKNET_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn configure_threads(deterministic: bool) -> Result<()> {
    let n = worker_threads(deterministic)?;
    // The global pool can only be set once per process; later calls keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cmd = Cli::command();
    let argv = match expand_config(&cmd, argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let matches = match cmd.clone().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let resolved = resolved_config(sub, sub_matches);
    match dispatch(&cli.command, &resolved) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Runs a parsed command; `resolved` is its echoed `key=value` config.
pub fn dispatch(command: &Command, resolved: &str) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a, resolved),
        Command::Train(a) => cmd_train(a, resolved),
        Command::Eval(a) => cmd_eval(a, resolved),
        Command::Bench(a) => cmd_bench(a, resolved),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at_path(dir))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::at_path(path))
}

/// `<dataset>.manifest`.
pub fn default_manifest_path(data: &Path) -> PathBuf {
    data.with_extension("manifest")
}

pub fn parse_classes(list: &str) -> Result<Vec<Modulation>> {
    list.split(',').map(|c| c.trim().parse()).collect()
}

pub fn cmd_gen(a: &GenArgs, resolved: &str) -> Result<()> {
    configure_threads(a.deterministic)?;
    let spec = DatasetSpec {
        classes: parse_classes(&a.classes)?,
        snr_grid: parse_snr_grid(&a.snrs)?,
        samples_per_cell: a.per_cell,
        length: a.length,
        sps: a.sps,
        rolloff: a.rolloff,
        cfo_max: a.cfo_max,
        master_seed: a.seed,
    };
    spec.validate()?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let dataset = spec.build()?;
    write_sigset(&a.out, &dataset)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| default_manifest_path(&a.out));
    write_manifest(&manifest, &spec.split())?;
    write_text(&a.out.with_extension(CONFIG_FILE), resolved)?;

    let width = dataset.classes.iter().map(String::len).max().unwrap_or(5).max(5);
    print!("{:<width$}", "class");
    for snr in &spec.snr_grid {
        print!(" {:>6}", format!("{snr}dB"));
    }
    println!();
    for name in &dataset.classes {
        print!("{name:<width$}");
        for _ in &spec.snr_grid {
            print!(" {:>6}", spec.samples_per_cell);
        }
        println!();
    }
    println!(
        "{} samples ({} classes x {} SNRs x {}) -> {}",
        dataset.len(),
        spec.classes.len(),
        spec.snr_grid.len(),
        spec.samples_per_cell,
        a.out.display()
    );
    Ok(())
}

/// Loads a dataset with its split assignment.
pub fn load_dataset(data: &Path, manifest: Option<&Path>) -> Result<(Dataset, Vec<Split>)> {
    let dataset = read_sigset(data)?;
    let splits = match manifest {
        Some(m) => read_manifest(m, dataset.len())?,
        None => {
            let m = default_manifest_path(data);
            if m.exists() {
                read_manifest(&m, dataset.len())?
            } else {
                eprintln!("note: no manifest at {}; using a stratified 60/20/20 split", m.display());
                stratified_split(&dataset.samples)
            }
        }
    };
    Ok((dataset, splits))
}

pub fn cmd_train(a: &TrainArgs, resolved: &str) -> Result<()> {
    configure_threads(a.deterministic)?;
    let (dataset, splits) = load_dataset(&a.data, a.manifest.as_deref())?;
    if let Some(n) = a.num_classes.filter(|&n| n != dataset.classes.len()) {
        return Err(Error::Config(format!(
            "num_classes = {n} but the dataset has {} classes",
            dataset.classes.len()
        )));
    }
    let train = Examples::from_split(&dataset, &splits, Split::Train)?;
    let val = Examples::from_split(&dataset, &splits, Split::Val)?;
    let mut model_cfg = ModelConfig::new(dataset.length, dataset.classes.len())
        .with_paths(a.variant)
        .with_thresholding(a.threshold);
    model_cfg.l2_lambda = a.l2;
    let model = AmcModel::new(model_cfg, a.seed)?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        plateau_window: a.plateau_window,
        early_stop_window: a.early_stop_window,
        min_delta: a.min_delta,
        seed: a.seed,
    };
    cfg.validate()?;
    create_dir(&a.out)?;
    write_text(&a.out.join(CONFIG_FILE), resolved)?;

    let params = model.param_count();
    if !a.quiet {
        println!(
            "{} train / {} val samples, {} classes, {params} parameters",
            train.len(),
            val.len(),
            dataset.classes.len()
        );
    }
    let start = Instant::now();
    let mut trainer = ModelTrainer::new(model, &train, &val, &cfg)?;
    let quiet = a.quiet;
    let history = trainer.fit(&cfg, |e| {
        if !quiet {
            println!(
                "epoch {:>3}  lr {:.2e}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
                e.epoch, e.lr, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
            );
        }
    })?;
    let seconds = start.elapsed().as_secs_f64();
    let model = trainer.model;

    let best = &history.epochs[history.best_epoch.max(1) - 1];
    let train_summary = vec![
        ("epochs_run".to_string(), history.epochs.len().to_string()),
        ("best_epoch".to_string(), history.best_epoch.to_string()),
        ("best_val_loss".to_string(), history.best_val_loss.to_string()),
        ("best_val_accuracy".to_string(), best.val_accuracy.to_string()),
        ("stopped_early".to_string(), history.stopped_early.to_string()),
        ("seed".to_string(), a.seed.to_string()),
    ];
    let meta = Checkpoint {
        classes: dataset.classes.clone(),
        summary: train_summary.clone(),
    };
    save_checkpoint(&a.out.join(CHECKPOINT_FILE), &model, &meta)?;
    write_history(&a.out, &history)?;
    let mut summary = vec![
        ("params".to_string(), params.to_string()),
        ("flops".to_string(), count_flops(&model.config, model.config.length)?.total().to_string()),
        ("variant".to_string(), a.variant.name().to_string()),
        ("threshold".to_string(), a.threshold.name().to_string()),
    ];
    summary.extend(train_summary);
    summary.push(("train_seconds".to_string(), format!("{seconds:.1}")));
    write_text(&a.out.join("summary.txt"), &summary_text(&summary))?;
    if !a.quiet {
        println!(
            "best epoch {} (val loss {:.4}); checkpoint {}",
            history.best_epoch,
            history.best_val_loss,
            a.out.join(CHECKPOINT_FILE).display()
        );
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, resolved: &str) -> Result<()> {
    configure_threads(a.deterministic)?;
    let (mut model, meta) = load_checkpoint(&a.checkpoint)?;
    let (dataset, splits) = load_dataset(&a.data, a.manifest.as_deref())?;
    if dataset.classes != meta.classes {
        return Err(Error::Config(format!(
            "dataset classes [{}] differ from the checkpoint's [{}]",
            dataset.classes.join(","),
            meta.classes.join(",")
        )));
    }
    if dataset.length != model.config.length {
        return Err(Error::Config(format!(
            "dataset captures have length {}, the checkpoint expects {}",
            dataset.length, model.config.length
        )));
    }
    let data = match a.split {
        EvalSplit::All => Examples::from_indices(&dataset, &(0..dataset.len()).collect::<Vec<_>>())?,
        EvalSplit::Train => Examples::from_split(&dataset, &splits, Split::Train)?,
        EvalSplit::Val => Examples::from_split(&dataset, &splits, Split::Val)?,
        EvalSplit::Test => Examples::from_split(&dataset, &splits, Split::Test)?,
    };
    let mut report = evaluate(&mut model, &data, &dataset.classes)?;
    if !a.no_timing {
        report.inference_ms = Some(time_inference(&mut model, &data, a.warmup, a.timing_runs)?);
    }
    create_dir(&a.out)?;
    write_text(&a.out.join(CONFIG_FILE), resolved)?;
    let extra = vec![
        ("checkpoint".to_string(), a.checkpoint.display().to_string()),
        ("split".to_string(), format!("{:?}", a.split).to_lowercase()),
    ];
    write_eval_report(&a.out, &report, &extra)?;
    println!("{:>7}  {:>8}  {:>6}", "snr_db", "accuracy", "n");
    for r in &report.per_snr {
        println!("{:>7}  {:>8.4}  {:>6}", r.snr_db, r.accuracy, r.n);
    }
    println!("average accuracy {:.4}", report.average_accuracy);
    println!("maximum accuracy {:.4}", report.max_accuracy);
    if let Some(ms) = report.inference_ms {
        println!("inference {ms:.4} ms/sample");
    }
    Ok(())
}

/// A fresh model whose normalization statistics come from one training-mode
/// pass over a small synthetic batch.
fn warmed_model(a: &BenchArgs) -> Result<AmcModel<f32>> {
    let config = ModelConfig::new(a.length, a.num_classes)
        .with_paths(a.variant)
        .with_thresholding(a.threshold);
    let mut model = AmcModel::new(config, a.seed)?;
    let data = bench_examples(a.length, a.num_classes, a.seed)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let (iq, ap, _) = data.batch(&rows);
    let tape = Tape::new();
    model.forward(&tape, Mode::Train, tape.constant(iq), tape.constant(ap))?;
    Ok(model)
}

fn bench_examples(length: usize, classes: usize, seed: u64) -> Result<Examples> {
    let spec = DatasetSpec {
        classes: Modulation::ALL.iter().copied().cycle().take(classes).collect(),
        snr_grid: vec![10],
        samples_per_cell: 8,
        length,
        master_seed: seed,
        ..DatasetSpec::default()
    };
    let mut dataset = spec.build()?;
    // Class names may repeat when more classes than modulations are asked for.
    dataset.classes = (0..classes).map(|c| format!("class{c}")).collect();
    Examples::from_indices(&dataset, &(0..dataset.len()).collect::<Vec<_>>())
}

pub fn cmd_bench(a: &BenchArgs, resolved: &str) -> Result<()> {
    configure_threads(a.deterministic)?;
    let only_bias = a.bias_experiment && !(a.params || a.flops || a.timing);
    let all = !(a.params || a.flops || a.timing || a.bias_experiment);
    let mut out = String::new();
    if !only_bias {
        let mut model = match &a.checkpoint {
            Some(path) => load_checkpoint(path)?.0,
            None => warmed_model(a)?,
        };
        if all || a.params {
            let table = crate::model::count_params(&model);
            out.push_str(&format!("parameters ({} / {})\n", model.config.paths.name(), model.config.thresholding.name()));
            out.push_str(&table.grouped().to_string());
            out.push_str("\n\n");
        }
        if all || a.flops {
            let mut totals = Vec::new();
            for &l in &a.lengths {
                let table = count_flops(&model.config, l)?;
                out.push_str(&format!("FLOPs at L = {l}\n{}\n\n", table.grouped()));
                totals.push((l, table.total()));
            }
            if let [(l0, f0), .., (l1, f1)] = totals[..] {
                out.push_str(&format!("FLOPs(L={l1}) / FLOPs(L={l0}) = {:.4}\n\n", f1 as f64 / f0 as f64));
            }
        }
        if all || a.timing {
            let data = bench_examples(model.config.length, model.config.num_classes, a.seed)?;
            let ms = time_inference(&mut model, &data, a.warmup, a.timing_runs)?;
            out.push_str(&format!(
                "median inference time {ms:.4} ms/sample ({} runs after {} warmup)\n\n",
                a.timing_runs, a.warmup
            ));
        }
    }
    if a.bias_experiment {
        let r = bias_mse_experiment(a.theta, a.tau, a.sigma, a.n, a.seed)?;
        out.push_str(&format!(
            "thresholding bias/MSE (theta {}, tau {}, sigma {}, n {})\n",
            a.theta, a.tau, a.sigma, a.n
        ));
        out.push_str(&format!("{:<8} {:>12} {:>12}\n", "", "bias", "mse"));
        out.push_str(&format!("{:<8} {:>12.6} {:>12.6}\n", "soft", r.bias_soft, r.mse_soft));
        out.push_str(&format!("{:<8} {:>12.6} {:>12.6}\n", "garrote", r.bias_garrote, r.mse_garrote));
    }
    print!("{out}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_text(&dir.join(CONFIG_FILE), resolved)?;
        write_text(&dir.join("bench.txt"), &out)?;
    }
    Ok(())
}
