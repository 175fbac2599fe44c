//! Command-line front end: dataset generation, analytic solving, network
//! training, and checkpoint evaluation as batch commands.
//!
//! Exit codes: 0 success, 2 input/config/parse error, 3 numeric abort during
//! training, 4 artifact incompatibility (version or shape mismatch).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use odmd_core::error::OdmdError;
use odmd_core::eval::{
    evaluate, evaluate_many, read_dataset, read_generation_config, read_train_config,
    write_dataset, write_plotdata, write_report, write_train_log, BenchmarkSet, BoxLsEstimator,
    DepthEstimator, EndpointEstimator, EvalReport, NetworkEstimator,
};
use odmd_core::generate::presets;
use odmd_core::network::{load_checkpoint, save_checkpoint};
use odmd_core::solvers::DepthCue;
use odmd_core::train::{train_observed, train_preset, TrainConfig, TRAIN_PRESET_NAMES};

#[derive(Parser)]
#[command(
    name = "odmd",
    about = "Object depth from camera motion and bounding-box sequences",
    version
)]
struct Cli {
    /// Worker threads (overrides the ODMD_THREADS environment variable;
    /// defaults to the logical CPU count). Outputs are identical for any
    /// thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file from a preset or config file.
    Generate(GenerateArgs),
    /// Run an analytic solver over a dataset and report error statistics.
    Solve(SolveArgs),
    /// Train a depth regressor and write the best checkpoint plus a log.
    Train(TrainArgs),
    /// Evaluate a checkpoint over one or more datasets.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Data distribution preset: normal, perturb-camera, perturb-detect,
    /// perturb-all, z-normal, z-perturb, z-perturb-detect.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Generation config file (JSON), alternative to --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of examples.
    #[arg(long)]
    count: usize,
    /// Stream seed; defaults to the seed stored in the preset/config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; format chosen by extension (.odmd.jsonl or .odmd.bin).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Solver: box-ls, expansion-2obs, or parallax-2obs.
    #[arg(long)]
    method: String,
    /// Dataset file to evaluate.
    dataset: PathBuf,
    /// Optional report destination (JSON).
    #[arg(short = 'o', long)]
    report: Option<PathBuf>,
    /// Optional per-example plot data destination (CSV).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training preset (see --help for the list); `-desk` suffixes select
    /// the CI-scale variants.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Training config file (JSON), alternative to --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint destination.
    #[arg(short, long)]
    out: PathBuf,
    /// Training-log destination; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset files; multiple sets are aggregated.
    #[arg(required = true)]
    datasets: Vec<PathBuf>,
    /// Optional report destination (JSON).
    #[arg(short = 'o', long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &OdmdError) -> u8 {
    match err {
        OdmdError::NonFinite { .. } => 3,
        OdmdError::Version { .. } | OdmdError::Contract(_) => 4,
        _ => 2,
    }
}

fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var("ODMD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        // Ignore failure: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cmd: Command) -> Result<(), OdmdError> {
    match cmd {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), OdmdError> {
    let cfg = match (&args.preset, &args.config) {
        (Some(name), None) => presets::by_name(name).ok_or_else(|| {
            OdmdError::input(format!(
                "unknown preset {name:?}; expected one of {}",
                presets::PRESET_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => read_generation_config(path)?,
        _ => return Err(OdmdError::input("pass exactly one of --preset or --config")),
    };
    let seed = args.seed.unwrap_or(cfg.seed);
    let start = Instant::now();
    let set = BenchmarkSet::generate(dataset_name(&args.out), &cfg, args.count, seed)?;
    let generated = start.elapsed().as_secs_f64();
    write_dataset(&args.out, &set)?;
    println!(
        "generated {} examples in {:.3} s ({:.0} examples/s), wrote {}",
        args.count,
        generated,
        args.count as f64 / generated,
        args.out.display()
    );
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    let mut name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    for suffix in [".jsonl", ".bin", ".odmd"] {
        if let Some(stripped) = name.strip_suffix(suffix) {
            name = stripped.to_string();
        }
    }
    name
}

const SUMMARY_HEADER: &str =
    "set                    method examples     mean   median      min       max      std";

fn cmd_solve(args: SolveArgs) -> Result<(), OdmdError> {
    let est: Box<dyn DepthEstimator> = match args.method.as_str() {
        "box-ls" => Box::new(BoxLsEstimator),
        "expansion-2obs" => Box::new(EndpointEstimator {
            cue: DepthCue::Expansion,
        }),
        "parallax-2obs" => Box::new(EndpointEstimator {
            cue: DepthCue::Parallax,
        }),
        other => {
            return Err(OdmdError::input(format!(
                "unknown method {other:?}; expected box-ls, expansion-2obs, or parallax-2obs"
            )));
        }
    };
    let set = read_dataset(&args.dataset)?;
    let report = evaluate(est.as_ref(), &set)?;
    println!("{SUMMARY_HEADER}");
    println!("{}", report.summary_row());
    if report.failures > 0 {
        println!(
            "{} examples failed (degenerate geometry) and are excluded from the statistics",
            report.failures
        );
    }
    if let Some(path) = &args.plot {
        write_plotdata(path, &report)?;
    }
    if let Some(path) = &args.report {
        write_report(path, &EvalReport::from_sets(vec![report]))?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), OdmdError> {
    let mut cfg: TrainConfig = match (&args.preset, &args.config) {
        (Some(name), None) => train_preset(name).ok_or_else(|| {
            OdmdError::input(format!(
                "unknown training preset {name:?}; expected one of {}",
                TRAIN_PRESET_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => read_train_config(path)?,
        _ => return Err(OdmdError::input("pass exactly one of --preset or --config")),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if cfg.is_full_scale() {
        eprintln!(
            "warning: {} runs {} iterations; full-scale training takes days on CPU \
             (the z-axis and -desk presets finish in minutes)",
            cfg.name, cfg.iterations
        );
    }
    println!(
        "training {} for {} iterations (batch {}, validation every {})",
        cfg.name,
        cfg.iterations,
        cfg.batch_size,
        cfg.validation_interval()
    );
    let outcome = train_observed(&cfg, |row| {
        println!(
            "iteration {:>8}  train loss {:>12.6}  val error {:>7.3}%",
            row.iteration, row.train_loss, row.val_error
        );
    })?;
    save_checkpoint(&outcome.params, outcome.loss_mode, &args.out)?;
    let log_path = args
        .log
        .unwrap_or_else(|| args.out.with_extension("log.jsonl"));
    write_train_log(&log_path, &outcome.log)?;
    println!(
        "best validation error {:.6}% at iteration {} ({:.1} s); checkpoint {}, log {}",
        outcome.best_val_error,
        outcome.best_iteration,
        outcome.wall_seconds,
        args.out.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), OdmdError> {
    let (params, mode) = load_checkpoint(&args.checkpoint)?;
    let sets = args
        .datasets
        .iter()
        .map(|p| read_dataset(p))
        .collect::<Result<Vec<_>, _>>()?;
    for set in &sets {
        let n = set.examples.first().map(|e| e.obs.len()).unwrap_or(0);
        if n != params.shape().n {
            return Err(OdmdError::contract(format!(
                "dataset {} has n={n} observations per example, checkpoint expects n={}",
                set.name,
                params.shape().n
            )));
        }
    }
    let est = NetworkEstimator::new(params, mode);
    let report = evaluate_many(&est, &sets)?;
    println!("{SUMMARY_HEADER}");
    for set_report in &report.sets {
        println!("{}", set_report.summary_row());
    }
    if let Some(all) = report.all_sets_mean_percent {
        println!("all sets mean percent error: {all:.4}");
    }
    if let Some(path) = &args.report {
        write_report(path, &report)?;
    }
    Ok(())
}
