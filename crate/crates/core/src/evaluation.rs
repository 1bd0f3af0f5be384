//! Bootstrap few-shot ranking: resample probe sets, average per-example
//! scores per model, and check every model pair against measured
//! out-of-domain accuracy.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{normalize, Attribution, Normalization};
use crate::corpus::{Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::factors::{baseline_score, factor_value, BaselineKind, FactorKind, FactorOptions, Prediction};
use crate::util::{derive_seed, digest_strs, rng, rng_stream};

pub const GUESS_LIMIT: usize = 6;

/// Uniform sample of `size` examples without replacement.
pub fn draw_population(ood_full: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    if size > ood_full.len() {
        return Err(Error::InvalidArgument(format!(
            "population size {size} exceeds the {} available examples",
            ood_full.len()
        )));
    }
    let mut rng = rng(seed);
    let examples = sample(&mut rng, ood_full.len(), size).into_iter().map(|i| ood_full.examples[i].clone()).collect();
    let mut provenance = ood_full.provenance.clone();
    provenance.params.insert("population_size".into(), size.to_string());
    provenance.params.insert("population_seed".into(), seed.to_string());
    Ok(Dataset {
        name: ood_full.name.clone(),
        split: Split::OodPopulation,
        examples,
        vocabulary: ood_full.vocabulary.clone(),
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Convention {
    /// Higher score predicts the worse model.
    Factor,
    /// Higher score predicts the better model.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
    Tie,
}

impl Outcome {
    pub fn credit(self) -> f64 {
        match self {
            Outcome::Success => 1.0,
            Outcome::Failure => 0.0,
            Outcome::Tie => 0.5,
        }
    }
}

/// Judges the predicted order of models `i` and `j` from their mean scores.
pub fn rank_pair(f_i: f64, f_j: f64, s_i: f64, s_j: f64, convention: Convention) -> Outcome {
    debug_assert!(s_i != s_j, "ground-truth ties are excluded before ranking");
    if f_i == f_j || s_i == s_j {
        return Outcome::Tie;
    }
    let i_predicted_better = match convention {
        Convention::Factor => f_i < f_j,
        Convention::Baseline => f_i > f_j,
    };
    if i_predicted_better == (s_i > s_j) {
        Outcome::Success
    } else {
        Outcome::Failure
    }
}

/// What a ranking method scores per example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name")]
pub enum RankSource {
    Factor(FactorKind),
    Baseline(BaselineKind),
}

impl RankSource {
    pub fn convention(self) -> Convention {
        match self {
            RankSource::Factor(_) => Convention::Factor,
            RankSource::Baseline(_) => Convention::Baseline,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RankSource::Factor(f) => f.name(),
            RankSource::Baseline(b) => b.name(),
        }
    }
}

impl core::str::FromStr for RankSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<BaselineKind>()
            .map(RankSource::Baseline)
            .or_else(|_| s.parse::<FactorKind>().map(RankSource::Factor))
            .map_err(|_| Error::InvalidArgument(format!("unknown factor or baseline {s}")))
    }
}

/// Per-example scores `[model][example]` for a factor or a deterministic
/// baseline, read from precomputed attributions. Every missing
/// (model, example) row is listed in the error.
pub fn score_table<'a, F>(
    source: RankSource,
    models: &[String],
    population: &[Example],
    lookup: F,
    options: &FactorOptions,
    normalization: Normalization,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&str, &str) -> Option<&'a Attribution>,
{
    if let RankSource::Baseline(kind @ (BaselineKind::Random | BaselineKind::Guess)) = source {
        return Err(Error::InvalidArgument(format!("{kind} has no per-example score table")));
    }
    let mut missing = Vec::new();
    for model in models {
        for ex in population {
            if lookup(model, &ex.id).is_none() {
                missing.push(format!("({model}, {})", ex.id));
            }
        }
    }
    if !missing.is_empty() {
        let shown = missing.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        let more = missing.len().saturating_sub(20);
        return Err(Error::Validation(format!(
            "{} attribution rows missing: {shown}{}",
            missing.len(),
            if more > 0 { format!(" and {more} more") } else { String::new() }
        )));
    }
    let mut unused = rng(0);
    models
        .iter()
        .map(|model| {
            population
                .iter()
                .map(|ex| {
                    let att = lookup(model, &ex.id).expect("checked above");
                    match source {
                        RankSource::Factor(kind) => {
                            let att = normalize(att, normalization);
                            factor_value(kind, ex, &att.scores, options)
                        }
                        RankSource::Baseline(kind) => {
                            let prediction = Prediction {
                                predicted: att.explained_class,
                                predicted_prob: att.predicted_prob,
                                gold: Some(ex.label),
                            };
                            baseline_score(kind, &prediction, &mut unused)
                        }
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodScores {
    /// Fixed per-example scores `[model][example]`.
    Table(Vec<Vec<f64>>),
    /// Fresh uniform draws for every probe slot.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodInput {
    pub name: String,
    pub convention: Convention,
    pub scores: MethodScores,
}

impl MethodInput {
    pub fn random() -> Self {
        Self { name: BaselineKind::Random.name().into(), convention: Convention::Baseline, scores: MethodScores::Random }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Number of bootstrap probe samples.
    pub samples: usize,
    pub probe_size: usize,
    pub seed: u64,
    /// Keep per-sample matrices in the report.
    #[serde(default)]
    pub keep_samples: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 500, probe_size: 10, seed: 0, keep_samples: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub label: String,
    /// Measured out-of-domain accuracy.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPair {
    pub a: String,
    pub b: String,
    pub s_a: f64,
    pub s_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub convention: Convention,
    /// Success credit per pair summed over samples (ties count 0.5).
    pub pair_successes: Vec<f64>,
    pub pair_accuracies: Vec<f64>,
    pub few_shot_accuracy: f64,
    /// Mean pair success on each sample, in sample order.
    pub sample_success: Vec<f64>,
    /// Identifies the probe samples behind `sample_success`.
    pub probe_digest: String,
    /// Mean score of each model over the whole population.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_means: Option<Vec<f64>>,
    /// `[sample][pair]` success credits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_pairs: Option<Vec<Vec<f64>>>,
    /// `[sample][model]` probe means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_means: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub population_digest: String,
    pub population_size: usize,
    pub config: EvalConfig,
    pub models: Vec<ModelScore>,
    pub pairs: Vec<ModelPair>,
    /// Pairs with equal measured accuracy, left out of every average.
    pub excluded_pairs: Vec<ModelPair>,
    pub methods: Vec<MethodResult>,
    /// Free-form provenance such as store digests and normalization.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl BootstrapReport {
    pub fn method(&self, name: &str) -> Result<&MethodResult> {
        self.methods
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("report has no method {name}")))
    }
}

/// Per-sample outcome for every method.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub index: usize,
    pub probe: Vec<usize>,
    /// `[method][pair]` credits.
    pub pair_credits: Vec<Vec<f64>>,
    /// `[method][model]` probe means.
    pub means: Vec<Vec<f64>>,
}

/// A validated bootstrap run. Samples can be evaluated in any order or in
/// parallel; `assemble` restores sample order.
#[derive(Debug, Clone)]
pub struct Protocol {
    models: Vec<ModelScore>,
    pairs: Vec<(usize, usize)>,
    excluded: Vec<(usize, usize)>,
    methods: Vec<MethodInput>,
    population_size: usize,
    population_digest: String,
    cfg: EvalConfig,
}

impl Protocol {
    pub fn new(
        models: Vec<ModelScore>,
        population_size: usize,
        population_digest: String,
        methods: Vec<MethodInput>,
        cfg: EvalConfig,
    ) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::TooFewModels { needed: 2, got: models.len() });
        }
        if cfg.samples == 0 || cfg.probe_size == 0 {
            return Err(Error::InvalidArgument("bootstrap needs at least one sample of at least one example".into()));
        }
        if population_size == 0 {
            return Err(Error::EmptyInput("empty population".into()));
        }
        if let Some(m) = models.iter().find(|m| !(0.0..=1.0).contains(&m.s)) {
            return Err(Error::Validation(format!("model {} has accuracy {} outside [0, 1]", m.label, m.s)));
        }
        let mut pairs = Vec::new();
        let mut excluded = Vec::new();
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                if models[i].s == models[j].s {
                    excluded.push((i, j));
                } else {
                    pairs.push((i, j));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::Validation("every model pair has equal measured accuracy".into()));
        }
        for method in &methods {
            if let MethodScores::Table(table) = &method.scores {
                if table.len() != models.len() || table.iter().any(|row| row.len() != population_size) {
                    return Err(Error::Validation(format!(
                        "{}: score table must be {} models x {population_size} examples",
                        method.name,
                        models.len()
                    )));
                }
                if table.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!("{}: non-finite score", method.name)));
                }
            }
        }
        Ok(Self { models, pairs, excluded, methods, population_size, population_digest, cfg })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    /// Example indices of probe sample `b`, drawn with replacement.
    pub fn probe(&self, b: usize) -> Vec<usize> {
        let mut r = rng_stream(derive_seed(self.cfg.seed, "probe"), b as u64);
        (0..self.cfg.probe_size).map(|_| r.gen_range(0..self.population_size)).collect()
    }

    pub fn evaluate_sample(&self, b: usize) -> SampleOutcome {
        let probe = self.probe(b);
        let mut random = rng_stream(derive_seed(self.cfg.seed, "random"), b as u64);
        let mut means = Vec::with_capacity(self.methods.len());
        let mut pair_credits = Vec::with_capacity(self.methods.len());
        for method in &self.methods {
            let f: Vec<f64> = match &method.scores {
                MethodScores::Table(table) => table
                    .iter()
                    .map(|row| probe.iter().map(|&k| row[k]).sum::<f64>() / probe.len() as f64)
                    .collect(),
                MethodScores::Random => self
                    .models
                    .iter()
                    .map(|_| (0..probe.len()).map(|_| random.gen::<f64>()).sum::<f64>() / probe.len() as f64)
                    .collect(),
            };
            pair_credits.push(
                self.pairs
                    .iter()
                    .map(|&(i, j)| rank_pair(f[i], f[j], self.models[i].s, self.models[j].s, method.convention).credit())
                    .collect(),
            );
            means.push(f);
        }
        SampleOutcome { index: b, probe, pair_credits, means }
    }

    pub fn assemble(&self, mut outcomes: Vec<SampleOutcome>) -> Result<BootstrapReport> {
        outcomes.sort_by_key(|o| o.index);
        if outcomes.len() != self.cfg.samples || outcomes.iter().enumerate().any(|(b, o)| o.index != b) {
            return Err(Error::Validation(format!("expected samples 0..{}", self.cfg.samples)));
        }
        let probe_digest = {
            let texts: Vec<String> = outcomes
                .iter()
                .map(|o| o.probe.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","))
                .collect();
            digest_strs(texts.iter().map(String::as_str))
        };
        let b = self.cfg.samples as f64;
        let methods = self
            .methods
            .iter()
            .enumerate()
            .map(|(k, method)| {
                let mut pair_successes = vec![0.0; self.pairs.len()];
                let mut sample_success = Vec::with_capacity(outcomes.len());
                for o in &outcomes {
                    let credits = &o.pair_credits[k];
                    for (total, c) in pair_successes.iter_mut().zip(credits) {
                        *total += c;
                    }
                    sample_success.push(credits.iter().sum::<f64>() / credits.len() as f64);
                }
                let pair_accuracies: Vec<f64> = pair_successes.iter().map(|s| s / b).collect();
                let few_shot_accuracy = pair_accuracies.iter().sum::<f64>() / pair_accuracies.len() as f64;
                let population_means = match &method.scores {
                    MethodScores::Table(table) => {
                        Some(table.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect())
                    }
                    MethodScores::Random => None,
                };
                MethodResult {
                    name: method.name.clone(),
                    convention: method.convention,
                    pair_successes,
                    pair_accuracies,
                    few_shot_accuracy,
                    sample_success,
                    probe_digest: probe_digest.clone(),
                    population_means,
                    sample_pairs: self.cfg.keep_samples.then(|| outcomes.iter().map(|o| o.pair_credits[k].clone()).collect()),
                    sample_means: self.cfg.keep_samples.then(|| outcomes.iter().map(|o| o.means[k].clone()).collect()),
                }
            })
            .collect();
        let pair = |&(i, j): &(usize, usize)| ModelPair {
            a: self.models[i].label.clone(),
            b: self.models[j].label.clone(),
            s_a: self.models[i].s,
            s_b: self.models[j].s,
        };
        Ok(BootstrapReport {
            population_digest: self.population_digest.clone(),
            population_size: self.population_size,
            config: self.cfg.clone(),
            models: self.models.clone(),
            pairs: self.pairs.iter().map(pair).collect(),
            excluded_pairs: self.excluded.iter().map(pair).collect(),
            methods,
            provenance: BTreeMap::new(),
        })
    }
}

/// Runs every bootstrap sample sequentially.
pub fn bootstrap_eval(
    models: Vec<ModelScore>,
    population_size: usize,
    population_digest: String,
    methods: Vec<MethodInput>,
    cfg: EvalConfig,
) -> Result<BootstrapReport> {
    let protocol = Protocol::new(models, population_size, population_digest, methods, cfg)?;
    let outcomes = (0..protocol.cfg.samples).map(|b| protocol.evaluate_sample(b)).collect();
    protocol.assemble(outcomes)
}

/// Expected pairwise accuracies of guessing: draw a best model from `prior`,
/// then order the rest uniformly at random. Exact by enumeration.
pub fn guess_baseline(models: &[ModelScore], prior: &[f64]) -> Result<MethodResult> {
    let m = models.len();
    if m < 2 {
        return Err(Error::TooFewModels { needed: 2, got: m });
    }
    if m > GUESS_LIMIT {
        return Err(Error::TooManyPlayers { method: "GUESS", players: m, limit: GUESS_LIMIT });
    }
    if prior.len() != m || prior.iter().any(|p| !(0.0..=1.0).contains(p)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("GUESS prior must be a probability vector over the models".into()));
    }
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).filter(|&(i, j)| models[i].s != models[j].s).collect();
    if pairs.is_empty() {
        return Err(Error::Validation("every model pair has equal measured accuracy".into()));
    }
    let mut expected = vec![0.0; pairs.len()];
    for (best, &p_best) in prior.iter().enumerate() {
        if p_best == 0.0 {
            continue;
        }
        let mut rest: Vec<usize> = (0..m).filter(|&k| k != best).collect();
        let orders = permutations(&mut rest);
        let weight = p_best / orders.len() as f64;
        for order in orders {
            // rank[k]: 0 is predicted best
            let mut rank = vec![0usize; m];
            for (r, &k) in core::iter::once(&best).chain(order.iter()).enumerate() {
                rank[k] = r;
            }
            for (e, &(i, j)) in expected.iter_mut().zip(&pairs) {
                if (rank[i] < rank[j]) == (models[i].s > models[j].s) {
                    *e += weight;
                }
            }
        }
    }
    let few_shot_accuracy = expected.iter().sum::<f64>() / expected.len() as f64;
    Ok(MethodResult {
        name: BaselineKind::Guess.name().into(),
        convention: Convention::Baseline,
        pair_successes: expected.clone(),
        pair_accuracies: expected,
        few_shot_accuracy,
        sample_success: Vec::new(),
        probe_digest: String::new(),
        population_means: None,
        sample_pairs: None,
        sample_means: None,
    })
}

fn permutations(items: &mut [usize]) -> Vec<Vec<usize>> {
    fn go(items: &mut [usize], k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.to_vec());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            go(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut out = Vec::new();
    go(items, 0, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub method_a: String,
    pub method_b: String,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

/// One-sided paired bootstrap test that `a` ranks better than `b`:
/// `p = (1 + #{samples with a - b <= 0}) / (B + 1)`.
pub fn paired_significance(a: &MethodResult, b: &MethodResult, alpha: f64) -> Result<Significance> {
    if a.sample_success.is_empty()
        || a.sample_success.len() != b.sample_success.len()
        || a.probe_digest != b.probe_digest
    {
        return Err(Error::MismatchedSamples(a.name.clone(), b.name.clone()));
    }
    let not_better = a.sample_success.iter().zip(&b.sample_success).filter(|(x, y)| *x - *y <= 0.0).count();
    let p_value = (1 + not_better) as f64 / (a.sample_success.len() + 1) as f64;
    Ok(Significance {
        method_a: a.name.clone(),
        method_b: b.name.clone(),
        p_value,
        alpha,
        significant: p_value < alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledPair {
    pub set: String,
    pub method: String,
    pub a: String,
    pub b: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub accuracy: f64,
    /// Method used for each set.
    pub methods: BTreeMap<String, String>,
    pub pairs: Vec<PooledPair>,
}

/// Unweighted mean of pairwise accuracies over several sets, each scored by
/// its own method.
pub fn pooled_report(entries: &[(String, &BootstrapReport, String)]) -> Result<PooledReport> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("nothing to pool".into()));
    }
    let mut pairs = Vec::new();
    let mut methods = BTreeMap::new();
    for (set, report, method) in entries {
        let result = report.method(method)?;
        methods.insert(set.clone(), method.clone());
        for (pair, &accuracy) in report.pairs.iter().zip(&result.pair_accuracies) {
            pairs.push(PooledPair { set: set.clone(), method: method.clone(), a: pair.a.clone(), b: pair.b.clone(), accuracy });
        }
    }
    let accuracy = pairs.iter().map(|p| p.accuracy).sum::<f64>() / pairs.len() as f64;
    Ok(PooledReport { accuracy, methods, pairs })
}
