use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{train, Architecture, Model, ModelSpec, TrainConfig, TrainReport};
use crate::corpus::{inoculation_mix, Dataset, InoculationSplit, Task, INOCULATION_RECIPES};
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// How to produce one suite member: architecture, inoculation split and
/// optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub label: String,
    pub architecture: Architecture,
    pub embed_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub inoculation: InoculationSplit,
    pub train: TrainConfig,
    /// Initialization seed; the inoculation shuffle derives from it.
    pub seed: u64,
}

impl Recipe {
    pub fn spec(&self, vocab_size: usize) -> ModelSpec {
        ModelSpec {
            architecture: self.architecture,
            embed_dim: self.embed_dim,
            hidden_dims: self.hidden_dims.clone(),
            vocab_size,
            seed: self.seed,
        }
    }
}

/// Inputs shared by every recipe of a suite.
#[derive(Debug, Clone, Copy)]
pub struct TaskData<'a> {
    pub task: Task,
    pub train: &'a Dataset,
    pub ood: &'a Dataset,
    pub pool: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteMember {
    pub label: String,
    pub recipe: Recipe,
    pub model: Model,
    /// Accuracy on the full OOD split.
    pub ood_accuracy: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSuite {
    pub members: Vec<SuiteMember>,
    /// Recipes whose training failed, with the failure.
    pub excluded: Vec<(String, Error)>,
}

impl ModelSuite {
    /// Collects per-recipe outcomes in recipe order. Failed recipes are
    /// excluded; fewer than two survivors is an error.
    pub fn from_results(results: Vec<(Recipe, Result<SuiteMember>)>) -> Result<Self> {
        let mut members = Vec::new();
        let mut excluded = Vec::new();
        for (recipe, outcome) in results {
            match outcome {
                Ok(member) => members.push(member),
                Err(err) => excluded.push((recipe.label, err)),
            }
        }
        if members.len() < 2 {
            return Err(Error::TooFewModels { needed: 2, got: members.len() });
        }
        Ok(Self { members, excluded })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn ood_performance(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.ood_accuracy).collect()
    }
}

/// Fraction of `dataset` classified correctly (ties predict class 0).
pub fn accuracy(model: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput(alloc::format!("dataset {} is empty", dataset.name)));
    }
    let mut correct = 0usize;
    for example in &dataset.examples {
        let p = model.predict_proba(&dataset.vocabulary, example)?;
        if u8::from(p[1] > p[0]) == example.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Trains one recipe and measures its OOD accuracy.
pub fn train_recipe(data: TaskData<'_>, recipe: &Recipe) -> Result<SuiteMember> {
    let vocab = &data.train.vocabulary;
    let mixed = inoculation_mix(
        data.task,
        data.train,
        data.pool,
        recipe.inoculation,
        derive_seed(recipe.seed, "inoculation"),
    )?;
    let model = Model::init(recipe.spec(vocab.len()))?;
    let (model, report) = train(&model, vocab, &mixed, &recipe.train)?;
    let ood_accuracy = accuracy(&model, data.ood)?;
    Ok(SuiteMember { label: recipe.label.clone(), recipe: recipe.clone(), model, ood_accuracy, report })
}

/// Trains every recipe sequentially. At least two recipes are required.
pub fn build_suite(data: TaskData<'_>, recipes: &[Recipe]) -> Result<ModelSuite> {
    if recipes.len() < 2 {
        return Err(Error::TooFewModels { needed: 2, got: recipes.len() });
    }
    let results = recipes.iter().map(|r| (r.clone(), train_recipe(data, r))).collect();
    ModelSuite::from_results(results)
}

/// Default recipe set. MSGS tasks use the six inoculation variants on one
/// architecture and initialization; pair tasks use four inoculation
/// variants plus two architecture variants.
pub fn default_recipes(task: Task, seed: u64) -> Vec<Recipe> {
    let base = |label: &str, architecture: Architecture, inoculation: InoculationSplit| {
        let hidden_dims = match architecture {
            Architecture::MeanEmbedLinear => vec![],
            _ => vec![32],
        };
        Recipe {
            label: label.into(),
            architecture,
            embed_dim: 16,
            hidden_dims,
            inoculation,
            train: TrainConfig {
                lr: 0.05,
                epochs: 40,
                batch_size: 16,
                l2: 1e-4,
                momentum: 0.9,
                word_dropout: 0.0,
                seed: derive_seed(seed, "train-order"),
            },
            seed: derive_seed(seed, "init"),
        }
    };
    if !task.is_pair() {
        return INOCULATION_RECIPES
            .iter()
            .map(|(label, split)| base(label, Architecture::MeanEmbedMlp, *split))
            .collect();
    }
    let mut recipes: Vec<Recipe> = INOCULATION_RECIPES
        .iter()
        .filter(|(label, _)| matches!(*label, "none" | "2L" | "2S" | "2L2S"))
        .map(|(label, split)| base(label, Architecture::MeanEmbedMlp, *split))
        .collect();
    let none = InoculationSplit::new(0.0, 0.0);
    recipes.push(base("attn-none", Architecture::AttnPoolMlp, none));
    recipes.push(base("linear-none", Architecture::MeanEmbedLinear, none));
    recipes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    fn data(vocab: &Vocabulary) -> (Dataset, Dataset, Dataset) {
        let (train, ood) = Task::MsgsMorph.generate(vocab, 300, 200, 1).unwrap();
        let pool = Task::MsgsMorph.inoculation_pool(vocab, 100, 2).unwrap();
        (train, ood, pool)
    }

    #[test]
    fn single_recipe_is_rejected() {
        let vocab = Vocabulary::standard();
        let (train, ood, pool) = data(&vocab);
        let task = TaskData { task: Task::MsgsMorph, train: &train, ood: &ood, pool: &pool };
        let recipes = default_recipes(Task::MsgsMorph, 1);
        assert_eq!(
            build_suite(task, &recipes[..1]).unwrap_err(),
            Error::TooFewModels { needed: 2, got: 1 }
        );
    }

    #[test]
    fn duplicate_recipes_agree_and_failures_are_excluded() {
        let vocab = Vocabulary::standard();
        let (train, ood, pool) = data(&vocab);
        let task = TaskData { task: Task::MsgsMorph, train: &train, ood: &ood, pool: &pool };
        let mut recipe = default_recipes(Task::MsgsMorph, 1).remove(1);
        recipe.train.epochs = 2;
        let mut broken = recipe.clone();
        broken.label = "broken".into();
        broken.embed_dim = 0;
        let suite = build_suite(task, &[recipe.clone(), recipe.clone(), broken]).unwrap();
        assert_eq!(suite.members.len(), 2);
        assert_eq!(suite.members[0].ood_accuracy, suite.members[1].ood_accuracy);
        assert_eq!(suite.excluded.len(), 1);
        assert_eq!(suite.excluded[0].0, "broken");
        let s = suite.ood_performance();
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        // ground truth is reproducible from the stored model
        assert_eq!(accuracy(&suite.members[0].model, &ood).unwrap(), s[0]);
    }

    #[test]
    fn default_recipes_cover_the_six_inoculation_variants() {
        let recipes = default_recipes(Task::MsgsVerb, 3);
        let labels: Vec<&str> = recipes.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["none", "2L", "2S", "2L1S", "1L2S", "2L2S"]);
        assert_eq!(default_recipes(Task::Paws, 3).len(), 6);
    }
}
