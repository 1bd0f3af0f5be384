//! Argument parsing and the process entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use oodrank_core::attribution::{
    IgConfig, KernelShapConfig, LimeConfig, Method, MethodConfig, Normalization, ShapSampling,
};
use oodrank_core::corpus::Task;
use oodrank_core::evaluation::EvalConfig;
use oodrank_core::factors::{BaselineKind, FactorKind, FactorOptions};
use oodrank_core::model::{default_recipes, Recipe};
use serde_json::{json, Value};

use crate::config::{
    AttributeStage, CommandConfig, EvalStage, GenConfig, Paths, PoolEntry, PoolStage, RunConfig, TrainStage,
};
use crate::error::{AppError, Result};
use crate::io::{self, MANIFEST_FILE};
use crate::pipeline::{self, stage_seed, Context};

#[derive(Debug, Parser)]
#[command(name = "oodrank", version, about = "Rank classifiers by out-of-domain accuracy from attribution factors")]
pub struct Cli {
    /// Root seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Replace existing outputs
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// Replay a resolved `<command>.config.json`
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train, OOD and inoculation datasets
    Gen(GenArgs),
    /// Train the model suite
    Train(TrainArgs),
    /// Precompute attributions for every (model, example)
    Attribute(AttributeArgs),
    /// Run the bootstrap ranking evaluation
    Eval(EvalArgs),
    /// Pool several evaluation reports
    ReportPool(PoolArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = 5000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_ood: usize,
    /// OOD population size (default 500 for MSGS, 600 for pair tasks)
    #[arg(long)]
    pub population: Option<usize>,
    /// Inoculation pool size
    #[arg(long, default_value_t = 400)]
    pub pool: usize,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Defaults to the task recorded by `gen`
    #[arg(long)]
    pub task: Option<Task>,
    /// JSON array of recipes replacing the default suite
    #[arg(long, value_name = "FILE")]
    pub recipes: Option<PathBuf>,
    /// Override the epoch count of every recipe
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub suite_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub method: Method,
    /// Perturbation samples (LIME, KSHAP)
    #[arg(long)]
    pub samples: Option<usize>,
    /// Enumerate all coalitions (KSHAP)
    #[arg(long)]
    pub full_enum: bool,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    /// Interpolation steps (IG)
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub suite_dir: Option<PathBuf>,
    #[arg(long)]
    pub store_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Attribution store to read
    #[arg(long, default_value = "lime")]
    pub attribution: Method,
    /// Factors (default depends on the task)
    #[arg(long = "factor", value_delimiter = ',')]
    pub factors: Vec<FactorKind>,
    #[arg(long = "baseline", value_delimiter = ',')]
    pub baselines: Vec<BaselineKind>,
    /// Evaluate baselines only
    #[arg(long, conflicts_with = "factors")]
    pub no_factors: bool,
    #[arg(long, default_value = "raw")]
    pub normalization: Normalization,
    #[arg(long, default_value_t = 2)]
    pub half_width: usize,
    #[arg(long)]
    pub surface_fallback: bool,
    /// Bootstrap samples B
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Probe size
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',')]
    pub guess_prior: Option<Vec<f64>>,
    /// Keep per-sample matrices in the report
    #[arg(long)]
    pub keep_samples: bool,
    #[arg(long)]
    pub export_factor_values: bool,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub suite_dir: Option<PathBuf>,
    #[arg(long)]
    pub store_dir: Option<PathBuf>,
    #[arg(long)]
    pub eval_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// `SET=REPORT:METHOD`, repeatable
    #[arg(long = "entry", required = true, value_parser = parse_entry)]
    pub entries: Vec<PoolEntry>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_entry(s: &str) -> std::result::Result<PoolEntry, String> {
    let (set, rest) = s.split_once('=').ok_or("expected SET=REPORT:METHOD")?;
    let (report, method) = rest.rsplit_once(':').ok_or("expected SET=REPORT:METHOD")?;
    if set.is_empty() || report.is_empty() || method.is_empty() {
        return Err("expected SET=REPORT:METHOD".into());
    }
    Ok(PoolEntry { set: set.into(), report: report.into(), method: method.to_ascii_uppercase().replace('-', "_") })
}

/// Factors evaluated when none are named.
pub fn default_factors(task: Task) -> Vec<FactorKind> {
    use FactorKind::*;
    match task {
        Task::MsgsMorph | Task::MsgsVerb | Task::MsgsAdject => vec![Window],
        Task::HansSub => vec![MaxDiff, SumDiff, IndexDiff, FirstTok],
        Task::HansCon => vec![MaxDiff, SumDiff, IndexDiff, FirstTok, Const],
        Task::Paws => vec![MaxDiff, SumDiff, IndexDiff, FirstTok, SwapAvg, SwapMaxDiff],
    }
}

pub const DEFAULT_BASELINES: [BaselineKind; 4] =
    [BaselineKind::Acc, BaselineKind::Conf, BaselineKind::ConfGt, BaselineKind::Random];

fn paths(data: &Option<PathBuf>, suite: &Option<PathBuf>, store: &Option<PathBuf>, eval: &Option<PathBuf>) -> Paths {
    Paths { data: data.clone(), suite: suite.clone(), store: store.clone(), eval: eval.clone() }
}

/// Turns parsed arguments into a fully resolved config. Some defaults depend
/// on earlier stage outputs, which are read from `out_dir`.
pub fn resolve(command: &Command, seed: u64, out_dir: &Path) -> Result<RunConfig> {
    let command = match command {
        Command::Gen(a) => CommandConfig::Gen(GenConfig {
            task: a.task,
            n_train: a.n_train,
            n_ood: a.n_ood,
            population: a.population.unwrap_or_else(|| a.task.default_population()),
            pool: a.pool,
            paths: paths(&a.data_dir, &None, &None, &None),
        }),
        Command::Train(a) => {
            let paths = paths(&a.data_dir, &a.suite_dir, &None, &None);
            let data_dir = paths.data(out_dir);
            let task = match a.task {
                Some(t) => t,
                None => pipeline::data_task(&data_dir)?,
            };
            let mut recipes: Vec<Recipe> = match &a.recipes {
                Some(file) => io::read_json(file)?,
                None => default_recipes(task, stage_seed(seed, "train")),
            };
            if let Some(epochs) = a.epochs {
                recipes.iter_mut().for_each(|r| r.train.epochs = epochs);
            }
            CommandConfig::Train(TrainStage { task, recipes, paths })
        }
        Command::Attribute(a) => {
            let s = stage_seed(seed, "attribute");
            let method = match a.method {
                Method::Lime => {
                    let mut cfg = LimeConfig { seed: s, kernel_width: a.kernel_width, ..Default::default() };
                    if let Some(n) = a.samples {
                        cfg.n_samples = n;
                    }
                    MethodConfig::Lime(cfg)
                }
                Method::KernelShap => {
                    let mut cfg = KernelShapConfig { seed: s, ..Default::default() };
                    if a.full_enum {
                        cfg.sampling = ShapSampling::FullEnum;
                    } else if let Some(n) = a.samples {
                        cfg.sampling = ShapSampling::Samples(n);
                    }
                    MethodConfig::KernelShap(cfg)
                }
                Method::ExactShap => MethodConfig::ExactShap,
                Method::Ig => MethodConfig::Ig(IgConfig { steps: a.steps.unwrap_or(IgConfig::default().steps) }),
            };
            CommandConfig::Attribute(AttributeStage {
                method,
                paths: paths(&a.data_dir, &a.suite_dir, &a.store_dir, &None),
            })
        }
        Command::Eval(a) => {
            let paths = paths(&a.data_dir, &a.suite_dir, &a.store_dir, &a.eval_dir);
            let factors = if a.no_factors {
                Vec::new()
            } else if a.factors.is_empty() {
                let manifest = io::read_manifest(&paths.suite(out_dir).join(MANIFEST_FILE))?;
                default_factors(manifest.task)
            } else {
                a.factors.clone()
            };
            let baselines = if a.baselines.is_empty() { DEFAULT_BASELINES.to_vec() } else { a.baselines.clone() };
            if !(0.0..=1.0).contains(&a.alpha) {
                return Err(AppError::Usage(format!("--alpha must lie in [0, 1], got {}", a.alpha)));
            }
            CommandConfig::Eval(EvalStage {
                attribution: a.attribution,
                factors,
                baselines,
                normalization: a.normalization,
                factor_options: FactorOptions { half_width: a.half_width, surface_fallback: a.surface_fallback },
                bootstrap: EvalConfig {
                    samples: a.samples,
                    probe_size: a.n,
                    seed: stage_seed(seed, "eval"),
                    keep_samples: a.keep_samples,
                },
                guess_prior: a.guess_prior.clone(),
                alpha: a.alpha,
                export_factor_values: a.export_factor_values,
                paths,
            })
        }
        Command::ReportPool(a) => {
            CommandConfig::ReportPool(PoolStage { entries: a.entries.clone(), output: a.output.clone() })
        }
    };
    Ok(RunConfig { seed, command })
}

/// Resolves and runs a parsed command line, returning the summary value.
pub fn execute(cli: &Cli) -> Result<Value> {
    let config = match (&cli.config, &cli.command) {
        (Some(_), Some(_)) => return Err(AppError::Usage("--config replays a saved run and takes no subcommand".into())),
        (None, None) => return Err(AppError::Usage("missing subcommand (gen, train, attribute, eval, report-pool)".into())),
        (Some(path), None) => {
            let config: RunConfig = io::read_json(path)?;
            if cli.seed.is_some_and(|s| s != config.seed) {
                return Err(AppError::Usage("--seed conflicts with the seed stored in --config".into()));
            }
            config
        }
        (None, Some(command)) => resolve(command, cli.seed.unwrap_or(0), &cli.out_dir)?,
    };
    let ctx = Context { out_dir: cli.out_dir.clone(), overwrite: cli.overwrite, jobs: cli.jobs };
    log::debug!("resolved config: {config:?}");
    pipeline::run(&config, &ctx)
}

fn command_name(cli: &Cli) -> &'static str {
    match &cli.command {
        Some(Command::Gen(_)) => "gen",
        Some(Command::Train(_)) => "train",
        Some(Command::Attribute(_)) => "attribute",
        Some(Command::Eval(_)) => "eval",
        Some(Command::ReportPool(_)) => "report-pool",
        None => "replay",
    }
}

/// Parses `args`, runs the command and prints the summary line. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            println!("{}", json!({"status": "error", "exit_code": 2, "error": first}));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            let code = e.exit_code();
            log::error!("{e}");
            println!("{}", json!({"command": command_name(&cli), "status": "error", "exit_code": code, "error": e.to_string()}));
            code
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::default().default_filter_or("info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
