//! Fully resolved run configuration. Every command writes one of these next
//! to its outputs; feeding it back through `--config` repeats the run.

use std::path::{Path, PathBuf};

use oodrank_core::attribution::{MethodConfig, Normalization};
use oodrank_core::corpus::Task;
use oodrank_core::evaluation::EvalConfig;
use oodrank_core::factors::{BaselineKind, FactorKind, FactorOptions};
use oodrank_core::model::Recipe;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Root seed; every stage derives its own seed from it.
    pub seed: u64,
    #[serde(flatten)]
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Gen(GenConfig),
    Train(TrainStage),
    Attribute(AttributeStage),
    Eval(EvalStage),
    ReportPool(PoolStage),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Gen(_) => "gen",
            CommandConfig::Train(_) => "train",
            CommandConfig::Attribute(_) => "attribute",
            CommandConfig::Eval(_) => "eval",
            CommandConfig::ReportPool(_) => "report-pool",
        }
    }
}

/// Directories a stage reads from or writes to. Unset entries resolve under
/// the output directory, so a config can be replayed elsewhere.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<PathBuf>,
}

impl Paths {
    fn pick(explicit: &Option<PathBuf>, out_dir: &Path, default: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| out_dir.join(default))
    }

    pub fn data(&self, out_dir: &Path) -> PathBuf {
        Self::pick(&self.data, out_dir, "data")
    }

    pub fn suite(&self, out_dir: &Path) -> PathBuf {
        Self::pick(&self.suite, out_dir, "suite")
    }

    pub fn store(&self, out_dir: &Path) -> PathBuf {
        Self::pick(&self.store, out_dir, "attributions")
    }

    pub fn eval(&self, out_dir: &Path) -> PathBuf {
        Self::pick(&self.eval, out_dir, "eval")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub task: Task,
    pub n_train: usize,
    pub n_ood: usize,
    pub population: usize,
    pub pool: usize,
    #[serde(default)]
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStage {
    pub task: Task,
    pub recipes: Vec<Recipe>,
    #[serde(default)]
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStage {
    pub method: MethodConfig,
    #[serde(default)]
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStage {
    /// Attribution method whose store feeds the factors and baselines.
    pub attribution: oodrank_core::attribution::Method,
    pub factors: Vec<FactorKind>,
    pub baselines: Vec<BaselineKind>,
    pub normalization: Normalization,
    pub factor_options: FactorOptions,
    pub bootstrap: EvalConfig,
    /// Prior over which model is best, for GUESS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess_prior: Option<Vec<f64>>,
    pub alpha: f64,
    /// Also write per-example factor values.
    pub export_factor_values: bool,
    #[serde(default)]
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub set: String,
    pub report: PathBuf,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStage {
    pub entries: Vec<PoolEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}
