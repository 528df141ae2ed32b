//! `harbench` subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::experiment::{run_experiment_with_models, ExperimentConfig, ExperimentError, ExperimentResult};
use crate::ingest::{
    discover_subject_files, eligible_subjects, load_subject_file, read_cache, write_cache, AccelRange,
    IngestError, LabelMap, SubjectRecording, CLASS_NAMES,
};
use crate::nn::gradcheck::{gradient_check, GradCheckConfig};
use crate::nn::NnError;
use crate::pipeline::{combination, combination_catalog, recording_windows, DatasetOptions, PipelineError};
use crate::report::{emit_report, load_config, read_result, to_json, ConfigError, ConfigOverrides, RunConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Gradient-check pass threshold on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "harbench", version, about = "IMU signal-combination benchmark for activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and cache the dataset, then print window counts per subject and activity.
    Prepare(CommonArgs),
    /// Train and evaluate every selected combination.
    Run(RunArgs),
    /// Re-render tables from stored summaries.
    Report {
        #[arg(long, default_value = "harbench-out")]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// `16g` or `6g`.
    #[arg(long)]
    accel_range: Option<String>,
    #[arg(long)]
    max_gap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated letters a-o, or `all`.
    #[arg(long)]
    combos: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    min_delta: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// `train` or `global`.
    #[arg(long)]
    norm_scope: Option<String>,
    /// Keep every k-th window.
    #[arg(long)]
    subsample: Option<usize>,
    /// Re-run combinations whose summaries already exist.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// First seed; consecutive seeds are used for further repetitions.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    repeats: u64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 6)]
    modality: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Ingest(_) | CliError::Pipeline(_) | CliError::Io(_) => EXIT_DATA,
            CliError::Nn(_) | CliError::GradCheck(_) => EXIT_NUMERICAL,
            CliError::Experiment(e) => match e {
                ExperimentError::Ingest(_) | ExperimentError::Pipeline(_) | ExperimentError::InsufficientSubjects(_) => {
                    EXIT_DATA
                }
                ExperimentError::FoldCoverage(_) | ExperimentError::EmptyTraining => EXIT_DATA,
                ExperimentError::DivergedLoss { .. } | ExperimentError::Nn(_) => EXIT_NUMERICAL,
            },
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("harbench: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Prepare(args) => prepare(&resolve(&args, ConfigOverrides::default())?),
        Command::Run(args) => {
            let overrides = ConfigOverrides {
                combos: args.combos,
                seed: args.seed,
                lr: args.lr,
                batch_size: args.batch_size,
                max_epochs: args.max_epochs,
                patience: args.patience,
                min_delta: args.min_delta,
                dropout: args.dropout,
                norm_scope: args.norm_scope,
                subsample: args.subsample,
                ..Default::default()
            };
            run(&resolve(&args.common, overrides)?, args.force)
        }
        Command::Report { out } => report(&out),
        Command::Gradcheck(args) => gradcheck(&args),
    }
}

fn resolve(common: &CommonArgs, mut overrides: ConfigOverrides) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    overrides.data_root = common.data_root.clone();
    overrides.accel_range = common.accel_range.clone();
    overrides.max_gap = common.max_gap;
    overrides.out = common.out.clone();
    Ok(load_config(&text, &overrides)?)
}

fn cache_path(out: &Path, subject: u32, range: AccelRange) -> PathBuf {
    out.join("cache").join(format!("subject{subject}_{range}.bin"))
}

/// Parses every subject file under the data root (in parallel) and refreshes
/// the cache. Without a data root, previously cached subjects are used.
fn load_recordings(cfg: &RunConfig) -> Result<Vec<SubjectRecording>, CliError> {
    let cache_dir = cfg.out.join("cache");
    match &cfg.data_root {
        Some(root) => {
            let files = discover_subject_files(root)
                .map_err(|e| CliError::Data(format!("cannot list {}: {e}", root.display())))?;
            if files.is_empty() {
                return Err(CliError::Data(format!("no subjectNNN.dat files under {}", root.display())));
            }
            std::fs::create_dir_all(&cache_dir)?;
            files
                .par_iter()
                .map(|(id, path)| {
                    let cached = cache_path(&cfg.out, *id, cfg.accel_range);
                    if cached.exists() {
                        if let Ok(rec) = read_cache(std::io::BufReader::new(std::fs::File::open(&cached)?)) {
                            return Ok(rec);
                        }
                    }
                    let rec = load_subject_file(path, cfg.accel_range)
                        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                    write_cache(&rec, std::io::BufWriter::new(std::fs::File::create(&cached)?))?;
                    Ok(rec)
                })
                .collect()
        }
        None => {
            let suffix = format!("_{}.bin", cfg.accel_range);
            let mut paths: Vec<PathBuf> = match std::fs::read_dir(&cache_dir) {
                Ok(entries) => entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(&suffix)))
                    .collect(),
                Err(_) => Vec::new(),
            };
            if paths.is_empty() {
                return Err(CliError::Data(format!(
                    "no data root given (--data-root or {}) and no cache in {}",
                    crate::report::config::DATA_ROOT_ENV,
                    cache_dir.display()
                )));
            }
            paths.sort();
            paths
                .iter()
                .map(|p| Ok(read_cache(std::io::BufReader::new(std::fs::File::open(p)?))?))
                .collect()
        }
    }
}

fn dataset_options(cfg: &RunConfig) -> DatasetOptions {
    DatasetOptions { label_map: LabelMap::default(), max_gap: cfg.max_gap, subsample: cfg.subsample }
}

fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let recordings = load_recordings(cfg)?;
    let options = dataset_options(cfg);
    let any = combination('d').expect("catalog entry");
    println!("subject  {:>8}  {:>8}  {:>8}  {:>16}  {:>17}  {:>6}", "sitting", "standing", "walking", "ascending stairs", "descending stairs", "total");
    for rec in &recordings {
        let counts = recording_windows(rec, &options.label_map, &any, options.max_gap).class_counts(CLASS_NAMES.len());
        let total: usize = counts.iter().sum();
        println!(
            "{:<7}  {:>8}  {:>8}  {:>8}  {:>16}  {:>17}  {:>6}",
            rec.subject_id, counts[0], counts[1], counts[2], counts[3], counts[4], total
        );
    }
    match eligible_subjects(&recordings, &options.label_map, options.max_gap) {
        Ok(ids) => println!("eligible subjects ({}): {ids:?}", ids.len()),
        Err(e) => println!("eligible subjects: {e}"),
    }
    println!("cache: {}", cfg.out.join("cache").display());
    Ok(())
}

fn summary_path(out: &Path, combo: char) -> PathBuf {
    out.join("summaries").join(format!("{combo}.json"))
}

fn run(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(cfg.out.join("summaries"))?;
    std::fs::write(cfg.out.join("config.txt"), cfg.to_config_text())?;

    let pending: Vec<char> =
        cfg.combos.iter().copied().filter(|&c| force || !summary_path(&cfg.out, c).exists()).collect();
    let recordings = if pending.is_empty() { Vec::new() } else { load_recordings(cfg)? };
    let exp_config = ExperimentConfig { hyper: cfg.hyper.clone(), scope: cfg.norm_scope, dataset: dataset_options(cfg) };

    let mut results = Vec::new();
    for &id in &cfg.combos {
        let path = summary_path(&cfg.out, id);
        if !pending.contains(&id) {
            eprintln!("{id}: summary exists, skipping (use --force to re-run)");
            results.push(read_result(&path)?);
            continue;
        }
        let combo = combination(id).ok_or_else(|| CliError::Usage(format!("unknown combination {id}")))?;
        eprintln!("{id}: training {} (N={})", combo.label(), combo.modality());
        let run = run_experiment_with_models(&recordings, &combo, &exp_config)?;
        write_fold_artifacts(&cfg.out, &run.result, &run.models)?;
        std::fs::write(&path, to_json(&run.result)?)?;
        eprintln!(
            "{id}: mean val accuracy {:.2}% (std {:.2}), mean epochs {:.1}",
            100.0 * run.result.mean_val_accuracy,
            100.0 * run.result.std_val_accuracy,
            run.result.mean_epochs
        );
        results.push(run.result);
    }
    let files = emit_report(&results, &cfg.out)?;
    print!("{}", std::fs::read_to_string(&files.table)?);
    Ok(())
}

fn write_fold_artifacts(out: &Path, result: &ExperimentResult, models: &[crate::nn::NetworkParams]) -> Result<(), CliError> {
    let logs = out.join("logs").join(result.combo.to_string());
    let ckpts = out.join("models").join(result.combo.to_string());
    std::fs::create_dir_all(&logs)?;
    std::fs::create_dir_all(&ckpts)?;
    for (fold, model) in result.folds.iter().zip(models) {
        let stem = format!("fold{}_subject{}", fold.fold_index, fold.val_subject);
        std::fs::write(logs.join(format!("{stem}.csv")), fold.training_log())?;
        model.write_checkpoint(std::io::BufWriter::new(std::fs::File::create(ckpts.join(format!("{stem}.bin")))?))?;
    }
    Ok(())
}

/// Loads every stored per-combination summary in catalog order.
pub fn stored_results(out: &Path) -> Result<Vec<ExperimentResult>, CliError> {
    let mut results = Vec::new();
    for combo in combination_catalog() {
        let path = summary_path(out, combo.id);
        if path.exists() {
            results.push(read_result(&path)?);
        }
    }
    Ok(results)
}

fn report(out: &Path) -> Result<(), CliError> {
    let selected: Option<Vec<char>> = std::fs::read_to_string(out.join("config.txt"))
        .ok()
        .and_then(|text| load_config(&text, &ConfigOverrides::default()).ok())
        .map(|cfg| cfg.combos);
    let mut results = stored_results(out)?;
    if let Some(ids) = selected {
        let by_id: BTreeMap<char, ExperimentResult> = results.into_iter().map(|r| (r.combo, r)).collect();
        results = ids.iter().filter_map(|id| by_id.get(id).cloned()).collect();
    }
    if results.is_empty() {
        return Err(CliError::Data(format!("no summaries under {}", out.join("summaries").display())));
    }
    let files = emit_report(&results, out)?;
    print!("{}", std::fs::read_to_string(&files.table)?);
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    if args.repeats == 0 || args.batch == 0 {
        return Err(CliError::Usage("--repeats and --batch must be positive".into()));
    }
    let mut worst: f64 = 0.0;
    for seed in args.seed..args.seed + args.repeats {
        let cfg = GradCheckConfig {
            modality: args.modality,
            batch: args.batch,
            samples_per_layer: args.samples,
            seed,
            ..Default::default()
        };
        let report = gradient_check(&cfg)?;
        for layer in &report.layers {
            println!(
                "seed {seed}  {:<6} checked {:>4}  kinks skipped {:>3}  max rel error {:.3e}",
                layer.layer, layer.checked, layer.skipped_kinks, layer.max_rel_error
            );
        }
        worst = worst.max(report.max_rel_error);
    }
    println!("max relative error: {worst:.3e}");
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::GradCheck(worst))
    }
}
