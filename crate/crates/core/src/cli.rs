//! Command-line front end.
//!
//! Every subcommand reads only its flags (no environment variables), writes
//! its outputs and a JSON run manifest next to them, and prints a one-line
//! JSON record on stdout. Failures print one JSON line on stderr and exit 1;
//! usage errors print clap's usage text and exit 2.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::active::{ability_bucket_report, run_active_loop, tertile_cuts, ActiveConfig, Policy, PoolState};
use crate::checkpoint::{Checkpoint, Model};
use crate::data::{
    build_dataset_labelled, load_rows, split_train_test, write_binary_csv, CsvFormat, Dataset,
};
use crate::error::{Error, Result};
use crate::eval::{cosine_similarity_matrix, evaluate_point, evaluate_vi, two_proportion_z_test};
use crate::experiments::{
    active_vs_random, low_data_sweep, recovery, summarize, write_curves_csv, write_summary_csv,
    write_table_csv, ActiveExperimentConfig, LowDataConfig, RecoveryConfig,
};
use crate::manifest::ManifestBuilder;
use crate::models::{ModelKind, ModelSpec};
use crate::optim::{sgd_train, TrainConfig};
use crate::synth::{generate_synthetic, SynthConfig};
use crate::vi::{train_vi, PredictMode, VIConfig, ViKind};

#[derive(Debug, Parser)]
#[command(name = "irtvi", version, about = "Latent-trait models for binary exam responses")]
struct Cli {
    /// Base seed; components derive their own streams from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Manifest path (defaults to `<primary output>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Binarize a marks file into the 0/1 schema.
    Ingest(IngestArgs),
    /// Fit a point model by SGD.
    Train(TrainArgs),
    /// Fit a variational model.
    TrainVi(TrainViArgs),
    /// Accuracy, precision and recall of a checkpoint.
    Eval(EvalArgs),
    /// Draw a synthetic dataset.
    Synth(SynthArgs),
    /// Cosine similarity of question vectors.
    Interpret(InterpretArgs),
    /// Two-proportion z-test.
    Significance(SignificanceArgs),
    /// Active learning curve for a pool of new students.
    Active(ActiveArgs),
    /// Run a named multi-step recipe.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Raw,
    Binary,
}

impl From<Format> for CsvFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Raw => CsvFormat::Raw,
            Format::Binary => CsvFormat::Binary,
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    format: Format,
    /// Hold out this fraction of each student's responses (0 uses everything).
    #[arg(long, default_value_t = 0.0)]
    test_fraction: f64,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_model_kind)]
    model: ModelKind,
    #[arg(long, default_value_t = 1)]
    dims: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().l2_penalty)]
    l2: f64,
    #[arg(long, default_value_t = TrainConfig::default().init_scale)]
    init_scale: f64,
    #[arg(long, default_value_t = TrainConfig::default().convergence_tol)]
    tol: f64,
    #[arg(long)]
    warm_start: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainViArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_vi_kind)]
    model: ViKind,
    #[arg(long, default_value_t = 1)]
    dims: usize,
    #[arg(long, default_value_t = VIConfig::default().m_samples)]
    samples: usize,
    #[arg(long, default_value_t = VIConfig::default().sigma_init)]
    sigma_init: f64,
    #[arg(long, default_value_t = VIConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = VIConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = VIConfig::default().batch_students)]
    batch_students: usize,
    #[arg(long, default_value_t = VIConfig::default().init_scale)]
    init_scale: f64,
    #[arg(long, default_value_t = VIConfig::default().convergence_tol)]
    tol: f64,
    /// Point-model checkpoint of the matching kind.
    #[arg(long)]
    warm_start: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Predict {
    /// Logistic at the posterior means.
    Mean,
    /// Monte Carlo average over posterior draws.
    Mc,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Prediction rule for variational checkpoints.
    #[arg(long, value_enum, default_value_t = Predict::Mean)]
    predict: Predict,
    #[arg(long, default_value_t = 100)]
    mc_samples: usize,
    /// Write the metrics record here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthConfig::default().students)]
    students: usize,
    #[arg(long, default_value_t = SynthConfig::default().questions)]
    questions: usize,
    #[arg(long, default_value_t = SynthConfig::default().dims)]
    dims: usize,
    #[arg(long, default_value_t = SynthConfig::default().mean_bq, allow_hyphen_values = true)]
    mean_bq: f64,
    #[arg(long, default_value_t = 1.0)]
    std_bq: f64,
    #[arg(long, default_value_t = 1.0)]
    std_bs: f64,
    #[arg(long, default_value_t = 1.0)]
    std_xs: f64,
    #[arg(long, default_value_t = 1.0)]
    std_xq: f64,
    #[arg(long, default_value_t = 0)]
    classes: usize,
    #[arg(long, default_value_t = 0.0)]
    class_effect_std: f64,
    #[arg(long, default_value_t = 1.0)]
    keep_prob: f64,
    #[arg(long)]
    out: PathBuf,
    /// Generating latents as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InterpretArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Min-max rescale the off-diagonal to [0, 1] for heatmaps.
    #[arg(long)]
    display_rescale: bool,
}

#[derive(Debug, Args)]
struct SignificanceArgs {
    #[arg(long)]
    x1: u64,
    #[arg(long)]
    n1: u64,
    #[arg(long)]
    x2: u64,
    #[arg(long)]
    n2: u64,
    #[arg(long, default_values_t = [0.01])]
    alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Uncertainty,
    Random,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Uncertainty => Policy::Uncertainty,
            PolicyArg::Random => Policy::Random,
        }
    }
}

#[derive(Debug, Args)]
struct ActiveArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    format: Format,
    #[arg(long, default_value_t = 2000)]
    pool_size: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Uncertainty)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 70)]
    rounds: usize,
    /// Fraction of each pool student's answers held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 5)]
    epochs_per_round: usize,
    #[arg(long, default_value_t = 50)]
    initial_epochs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Recipe {
    AppendixCRecovery,
    LowDataSweep,
    ActiveVsRandom,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    recipe: Recipe,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated seeds (default 0,1,2,3,4).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    students: Option<usize>,
    #[arg(long)]
    questions: Option<usize>,
    /// Latent dimension of the generated data.
    #[arg(long)]
    dims: Option<usize>,
    /// Low-data sweep: interaction dimension of the fitted models.
    #[arg(long)]
    model_dims: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// Low-data sweep: fractions of students kept.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Low-data sweep on a real dataset instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    format: Format,
    #[arg(long)]
    epochs: Option<usize>,
    /// L2 penalty of the point models.
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    vi_epochs: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
}

fn parse_model_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_vi_kind(s: &str) -> std::result::Result<ViKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Single-line error record on stderr.
#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::Dataset(_) => "dataset",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::IndexOutOfRange { .. } => "index_out_of_range",
        Error::NonFinite { .. } => "non_finite",
        Error::Shape(_) => "shape",
        Error::Checkpoint(_) => "checkpoint",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // Built without `parse_default_env` so RUST_LOG is ignored.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    let command_line: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &command_line) {
        Ok(()) => 0,
        Err(e) => {
            let record = ErrorRecord {
                error: error_kind(&e),
                message: e.to_string(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&record).expect("error record serializes")
            );
            1
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Train(_) => "train",
        Command::TrainVi(_) => "train-vi",
        Command::Eval(_) => "eval",
        Command::Synth(_) => "synth",
        Command::Interpret(_) => "interpret",
        Command::Significance(_) => "significance",
        Command::Active(_) => "active",
        Command::Experiment(_) => "experiment",
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn manifest_path(cli: &Cli, primary: &Path) -> PathBuf {
    cli.manifest.clone().unwrap_or_else(|| {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    })
}

/// Dataset for training or evaluation: the held-out part when
/// `test_fraction > 0` and `test` is set, the training part when it is not.
fn select_split(d: Dataset, test_fraction: f64, seed: u64, test: bool) -> Result<Dataset> {
    if test_fraction == 0.0 {
        return Ok(d);
    }
    let split = split_train_test(&d, test_fraction, seed)?;
    Ok(if test { split.test } else { split.train })
}

fn run(cli: &Cli, command_line: &[String]) -> Result<()> {
    let mut m = ManifestBuilder::new(command_line, subcommand_name(&cli.command));
    m.seed("seed", cli.seed);
    let manifest_target = match &cli.command {
        Command::Ingest(a) => {
            m.input(&a.data)?;
            let d = build_dataset_labelled(&load_rows(&a.data, a.format.into())?)?;
            write_binary_csv(&d, create(&a.out)?)?;
            m.output(&a.out);
            #[derive(Serialize)]
            struct Summary {
                responses: usize,
                students: usize,
                questions: usize,
                classes: usize,
                correct_rate: f64,
            }
            let summary = Summary {
                responses: d.len(),
                students: d.num_students(),
                questions: d.num_questions(),
                classes: d.num_classes(),
                correct_rate: d.correct_rate(),
            };
            m.config(&serde_json::json!({"format": format!("{:?}", a.format).to_lowercase()}))?;
            print_json(&summary)?;
            Some(a.out.clone())
        }
        Command::Train(a) => {
            let cfg = TrainConfig {
                learning_rate: a.lr,
                epochs: a.epochs,
                batch_size: a.batch_size,
                l2_penalty: a.l2,
                seed: cli.seed,
                init_scale: a.init_scale,
                convergence_tol: a.tol,
            };
            m.config(&serde_json::json!({
                "model": a.model.as_str(), "dims": a.dims, "train": cfg,
                "test_fraction": a.data.test_fraction,
            }))?;
            m.input(&a.data.data)?;
            let full = build_dataset_labelled(&load_rows(&a.data.data, a.data.format.into())?)?;
            let train = select_split(full, a.data.test_fraction, cli.seed, false)?;
            let warm = match &a.warm_start {
                Some(p) => {
                    m.input(p)?;
                    Some(Checkpoint::load(p)?.model.point())
                }
                None => None,
            };
            let spec = ModelSpec {
                kind: a.model,
                dims: if a.model == ModelKind::Rasch { 0 } else { a.dims },
            };
            let (params, report) = sgd_train(spec, &train, &cfg, warm.as_ref())?;
            Checkpoint::new(Model::Point(params), &train)?.save(&a.out)?;
            m.output(&a.out);
            print_json(&report)?;
            Some(a.out.clone())
        }
        Command::TrainVi(a) => {
            let cfg = VIConfig {
                m_samples: a.samples,
                sigma_init: a.sigma_init,
                learning_rate: a.lr,
                epochs: a.epochs,
                batch_students: a.batch_students,
                dims: a.dims,
                seed: cli.seed,
                init_scale: a.init_scale,
                convergence_tol: a.tol,
            };
            m.config(&serde_json::json!({
                "model": a.model.as_str(), "vi": cfg, "test_fraction": a.data.test_fraction,
            }))?;
            m.input(&a.data.data)?;
            let full = build_dataset_labelled(&load_rows(&a.data.data, a.data.format.into())?)?;
            let train = select_split(full, a.data.test_fraction, cli.seed, false)?;
            let warm = match &a.warm_start {
                Some(p) => {
                    m.input(p)?;
                    match Checkpoint::load(p)?.model {
                        Model::Point(p) => Some(p),
                        Model::Vi(_) => {
                            return Err(Error::Checkpoint(
                                "warm start needs a point-model checkpoint".into(),
                            ))
                        }
                    }
                }
                None => None,
            };
            let (params, report) = train_vi(a.model, &train, &cfg, warm.as_ref())?;
            Checkpoint::new(Model::Vi(params), &train)?.save(&a.out)?;
            m.output(&a.out);
            print_json(&report)?;
            Some(a.out.clone())
        }
        Command::Eval(a) => {
            m.config(&serde_json::json!({
                "threshold": a.threshold, "test_fraction": a.data.test_fraction,
                "predict": format!("{:?}", a.predict).to_lowercase(), "mc_samples": a.mc_samples,
            }))?;
            m.input(&a.checkpoint)?.input(&a.data.data)?;
            let ck = Checkpoint::load(&a.checkpoint)?;
            let aligned = ck.align(&load_rows(&a.data.data, a.data.format.into())?)?;
            let test = select_split(aligned, a.data.test_fraction, cli.seed, true)?;
            let report = match &ck.model {
                Model::Point(p) => evaluate_point(p, &test, a.threshold)?,
                Model::Vi(v) => {
                    let mode = match a.predict {
                        Predict::Mean => PredictMode::PlugInMean,
                        Predict::Mc => PredictMode::MonteCarlo {
                            samples: a.mc_samples,
                            seed: cli.seed,
                        },
                    };
                    evaluate_vi(v, &test, mode, a.threshold)?
                }
            };
            print_json(&report)?;
            if let Some(out) = &a.out {
                write_json(out, &report)?;
                m.output(out);
            }
            a.out.clone()
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                students: a.students,
                questions: a.questions,
                dims: a.dims,
                mean_bq: a.mean_bq,
                std_bq: a.std_bq,
                std_bs: a.std_bs,
                std_xs: a.std_xs,
                std_xq: a.std_xq,
                num_classes: a.classes,
                class_effect_std: a.class_effect_std,
                keep_prob: a.keep_prob,
                seed: cli.seed,
            };
            m.config(&cfg)?;
            let (data, truth) = generate_synthetic(&cfg)?;
            write_binary_csv(&data, create(&a.out)?)?;
            m.output(&a.out);
            if let Some(t) = &a.truth {
                write_json(t, &truth)?;
                m.output(t);
            }
            print_json(&serde_json::json!({
                "responses": data.len(), "correct_rate": data.correct_rate(),
            }))?;
            Some(a.out.clone())
        }
        Command::Interpret(a) => {
            m.config(&serde_json::json!({"display_rescale": a.display_rescale}))?;
            m.input(&a.checkpoint)?;
            let ck = Checkpoint::load(&a.checkpoint)?;
            let point = ck.model.point();
            let vectors = point.question_vectors().ok_or_else(|| {
                Error::invalid(format!("{} has no question vectors", ck.model.kind_name()))
            })?;
            let mut sim = cosine_similarity_matrix(vectors, &ck.ids.questions)?;
            if a.display_rescale {
                sim = sim.display_rescale();
            }
            sim.write_csv(create(&a.out)?)?;
            m.output(&a.out);
            print_json(&serde_json::json!({
                "questions": ck.ids.questions.len(), "zero_rows": sim.zero_rows,
                "display_rescaled": sim.display_rescaled,
            }))?;
            Some(a.out.clone())
        }
        Command::Significance(a) => {
            let r = two_proportion_z_test(a.x1, a.n1, a.x2, a.n2, &a.alpha)?;
            m.config(&serde_json::json!({
                "x1": a.x1, "n1": a.n1, "x2": a.x2, "n2": a.n2, "alpha": a.alpha,
            }))?;
            print_json(&r)?;
            None
        }
        Command::Active(a) => {
            let cfg = ActiveConfig {
                policy: a.policy.into(),
                batch_size: a.batch,
                rounds: a.rounds,
                retrain: TrainConfig {
                    epochs: a.epochs_per_round,
                    convergence_tol: 0.0,
                    seed: cli.seed,
                    ..TrainConfig::default()
                },
                initial_epochs: a.initial_epochs,
                threshold: 0.5,
                seed: cli.seed,
            };
            m.config(&serde_json::json!({
                "active": cfg, "pool_size": a.pool_size, "holdout": a.holdout,
            }))?;
            m.input(&a.data)?;
            let d = build_dataset_labelled(&load_rows(&a.data, a.format.into())?)?;
            let state = PoolState::from_dataset(&d, a.pool_size, a.holdout, cli.seed)?;
            let curve = run_active_loop(&state, &cfg)?;
            curve.write_csv(create(&a.out)?, true)?;
            m.output(&a.out);
            print_json(&serde_json::json!({
                "rounds": curve.points.len() - 1,
                "final_accuracy": curve.points.last().map(|p| p.accuracy),
            }))?;
            Some(a.out.clone())
        }
        Command::Experiment(a) => {
            std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
            run_experiment(a, &mut m)?;
            Some(a.out_dir.join("table.csv"))
        }
    };
    let manifest = m.finish();
    let target = match (&cli.manifest, &manifest_target, &cli.command) {
        (Some(p), _, _) => Some(p.clone()),
        (None, _, Command::Experiment(a)) => Some(a.out_dir.join("manifest.json")),
        (None, Some(primary), _) => Some(manifest_path(cli, primary)),
        (None, None, _) => None,
    };
    if let Some(path) = target {
        manifest.write(&path)?;
        info!("manifest written to {}", path.display());
    }
    Ok(())
}

fn run_experiment(a: &ExperimentArgs, m: &mut ManifestBuilder) -> Result<()> {
    let seeds = a.seeds.clone().unwrap_or_else(|| (0..5).collect());
    for &s in &seeds {
        m.seed(&format!("recipe_seed_{s}"), s);
    }
    let table = a.out_dir.join("table.csv");
    let summary = a.out_dir.join("summary.csv");
    let rows = match a.recipe {
        Recipe::AppendixCRecovery => {
            let mut cfg = RecoveryConfig {
                seeds,
                ..RecoveryConfig::default()
            };
            if let Some(v) = a.students {
                cfg.synth.students = v;
            }
            if let Some(v) = a.questions {
                cfg.synth.questions = v;
            }
            if let Some(v) = a.dims {
                cfg.synth.dims = v;
                cfg.interaction_dims = v;
            }
            if let Some(v) = a.epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = a.l2 {
                cfg.train.l2_penalty = v;
            }
            m.config(&cfg)?;
            recovery(&cfg)?
        }
        Recipe::LowDataSweep => {
            let mut cfg = LowDataConfig {
                seeds,
                ..LowDataConfig::default()
            };
            if let Some(v) = &a.fractions {
                cfg.fractions = v.clone();
            }
            if let Some(v) = a.students {
                cfg.synth.students = v;
            }
            if let Some(v) = a.questions {
                cfg.synth.questions = v;
            }
            if let Some(v) = a.dims {
                cfg.synth.dims = v;
            }
            if let Some(v) = a.model_dims {
                cfg.dims = v;
            }
            if let Some(v) = a.classes {
                cfg.synth.num_classes = v;
            }
            if let Some(v) = a.epochs {
                cfg.point.epochs = v;
            }
            if let Some(v) = a.l2 {
                cfg.point.l2_penalty = v;
            }
            if let Some(v) = a.vi_epochs {
                cfg.vi.epochs = v;
            }
            m.config(&cfg)?;
            let data = match &a.data {
                Some(path) => {
                    if !path.exists() {
                        return Err(Error::invalid(format!(
                            "{} not found; produce it with `irtvi ingest` or `irtvi synth` first",
                            path.display()
                        )));
                    }
                    m.input(path)?;
                    Some(build_dataset_labelled(&load_rows(path, a.format.into())?)?)
                }
                None => None,
            };
            low_data_sweep(&cfg, data.as_ref())?
        }
        Recipe::ActiveVsRandom => {
            let mut cfg = ActiveExperimentConfig {
                seeds,
                ..ActiveExperimentConfig::default()
            };
            if let Some(v) = a.pool_size {
                cfg.pool_size = v;
            }
            if let Some(v) = a.students {
                cfg.synth.students = v;
            }
            if let Some(v) = a.questions {
                cfg.synth.questions = v;
            }
            if let Some(v) = a.rounds {
                cfg.active.rounds = v;
            }
            if let Some(v) = a.epochs {
                cfg.active.retrain.epochs = v;
            }
            if let Some(v) = a.l2 {
                cfg.active.retrain.l2_penalty = v;
            }
            m.config(&cfg)?;
            let runs = active_vs_random(&cfg)?;
            let curves = a.out_dir.join("curves.csv");
            write_curves_csv(&runs, create(&curves)?)?;
            m.output(&curves);
            let buckets = a.out_dir.join("buckets.csv");
            write_buckets(&runs, &buckets)?;
            m.output(&buckets);
            runs.iter()
                .flat_map(|r| {
                    let last = |c: &crate::active::LearningCurve| {
                        c.points.last().map_or(0.0, |p| p.accuracy)
                    };
                    [
                        ("uncertainty@10", r.uncertainty.at(10)),
                        ("random@10", r.random.at(10)),
                        ("uncertainty@all", Some(last(&r.uncertainty))),
                        ("random@all", Some(last(&r.random))),
                    ]
                    .into_iter()
                    .filter_map(move |(name, acc)| {
                        acc.map(|accuracy| crate::experiments::TableRow {
                            model: name.to_owned(),
                            dataset: format!("pool-{}", cfg.pool_size),
                            students: cfg.pool_size,
                            seed: r.seed,
                            accuracy,
                            correct: 0,
                            n: 0,
                        })
                    })
                })
                .collect()
        }
    };
    write_table_csv(&rows, create(&table)?)?;
    m.output(&table);
    let means = summarize(&rows);
    write_summary_csv(&means, create(&summary)?)?;
    m.output(&summary);
    for s in &means {
        print_json(s)?;
    }
    Ok(())
}

/// Per-tertile curves of every run, `questions_revealed,accuracy,policy,seed,bucket`.
fn write_buckets(runs: &[crate::experiments::ActiveRun], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["questions_revealed", "accuracy", "policy", "seed", "bucket"])?;
    for run in runs {
        let cuts = tertile_cuts(&run.abilities);
        for curve in [&run.uncertainty, &run.random] {
            for (b, bucket) in ability_bucket_report(curve, &run.abilities, &cuts)?
                .iter()
                .enumerate()
            {
                let Some(points) = &bucket.points else {
                    warn!("seed {} bucket {b} is empty", run.seed);
                    continue;
                };
                for p in points {
                    w.write_record([
                        p.questions_revealed.to_string(),
                        p.accuracy.to_string(),
                        curve.policy.as_str().to_owned(),
                        run.seed.to_string(),
                        b.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
