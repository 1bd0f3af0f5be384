//! The five pipeline stages. Each takes a resolved [`RunConfig`], writes its
//! outputs and the config under the output directory, and returns a summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use oodrank_core::attribution::{explain, Attribution, Method};
use oodrank_core::corpus::{Dataset, Split, Task, Vocabulary};
use oodrank_core::evaluation::{
    draw_population, guess_baseline, paired_significance, pooled_report, score_table, BootstrapReport, Convention,
    MethodInput, MethodResult, MethodScores, ModelScore, Protocol, RankSource, Significance,
};
use oodrank_core::factors::{uses_surface_fallback, BaselineKind};
use oodrank_core::model::{train_recipe, Model, ModelSuite, TaskData};
use oodrank_core::util::derive_seed;
use oodrank_core::Error as CoreError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{AttributeStage, CommandConfig, EvalStage, GenConfig, PoolStage, RunConfig, TrainStage};
use crate::error::{AppError, Result};
use crate::io::{self, ManifestMember, SuiteManifest, FORMAT_VERSION, MANIFEST_FILE};

/// Rows computed between appends to an attribution store.
const STORE_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub overwrite: bool,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
}

impl Context {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), overwrite: false, jobs: 0 }
    }

    fn config_path(&self, command: &str) -> PathBuf {
        self.out_dir.join(format!("{command}.config.json"))
    }

    fn guard(&self, paths: &[PathBuf]) -> Result<()> {
        if self.overwrite {
            return Ok(());
        }
        if let Some(existing) = paths.iter().find(|p| p.exists()) {
            return Err(AppError::Usage(format!("{} already exists; pass --overwrite to replace it", existing.display())));
        }
        Ok(())
    }
}

/// Stage seeds are derived from the root seed by stage name.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    derive_seed(root, stage)
}

pub fn run(config: &RunConfig, ctx: &Context) -> Result<Value> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start {} worker threads: {e}", ctx.jobs)))?;
    pool.install(|| match &config.command {
        CommandConfig::Gen(cfg) => gen(config, cfg, ctx),
        CommandConfig::Train(cfg) => train(config, cfg, ctx),
        CommandConfig::Attribute(cfg) => attribute(config, cfg, ctx),
        CommandConfig::Eval(cfg) => eval(config, cfg, ctx),
        CommandConfig::ReportPool(cfg) => report_pool(config, cfg, ctx),
    })
}

fn write_config(config: &RunConfig, ctx: &Context) -> Result<PathBuf> {
    let path = ctx.config_path(config.command.name());
    io::write_json(&path, config)?;
    Ok(path)
}

fn gen(config: &RunConfig, cfg: &GenConfig, ctx: &Context) -> Result<Value> {
    let dir = cfg.paths.data(&ctx.out_dir);
    let splits = [Split::Train, Split::OodFull, Split::OodPopulation, Split::InoculationPool];
    let mut guarded: Vec<PathBuf> = splits.iter().map(|&s| io::dataset_path(&dir, s)).collect();
    guarded.push(ctx.config_path("gen"));
    ctx.guard(&guarded)?;

    let vocab = Vocabulary::standard();
    let (train, ood) = cfg.task.generate(&vocab, cfg.n_train, cfg.n_ood, stage_seed(config.seed, "gen"))?;
    let pool = cfg.task.inoculation_pool(&vocab, cfg.pool, stage_seed(config.seed, "pool"))?;
    let population = draw_population(&ood, cfg.population, stage_seed(config.seed, "population"))?;
    if dir.exists() && ctx.overwrite {
        for file in [io::PROVENANCE_FILE, io::VOCAB_FILE] {
            let _ = fs::remove_file(dir.join(file));
        }
    }
    let mut files = Vec::new();
    let mut counts = BTreeMap::new();
    for mut dataset in [train, ood, population, pool] {
        dataset.provenance.params.insert("task".into(), cfg.task.name().into());
        dataset.validate()?;
        counts.insert(dataset.split.name(), dataset.len());
        files.push(io::write_dataset(&dir, &dataset)?);
        log::info!("wrote {} ({} examples)", files.last().unwrap().display(), dataset.len());
    }
    let config_path = write_config(config, ctx)?;
    Ok(json!({
        "command": "gen",
        "status": "ok",
        "task": cfg.task.name(),
        "data_dir": dir,
        "counts": counts,
        "files": files,
        "config": config_path,
    }))
}

/// Task recorded by `gen` in a data directory.
pub fn data_task(dir: &Path) -> Result<Task> {
    let info: BTreeMap<String, io::DatasetInfo> = io::read_json(&dir.join(io::PROVENANCE_FILE))?;
    let task = info
        .values()
        .find_map(|i| i.provenance.params.get("task"))
        .ok_or_else(|| AppError::Data(format!("{}: no task recorded", dir.display())))?;
    Ok(task.parse::<Task>()?)
}

fn check_labels(recipes: &[oodrank_core::model::Recipe]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for recipe in recipes {
        let ok = !recipe.label.is_empty()
            && recipe.label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !ok {
            return Err(AppError::Usage(format!("recipe label `{}` must use letters, digits, '-', '_' or '.'", recipe.label)));
        }
        if !seen.insert(recipe.label.as_str()) {
            return Err(AppError::Usage(format!("duplicate recipe label `{}`", recipe.label)));
        }
    }
    Ok(())
}

fn train(config: &RunConfig, cfg: &TrainStage, ctx: &Context) -> Result<Value> {
    let data_dir = cfg.paths.data(&ctx.out_dir);
    let suite_dir = cfg.paths.suite(&ctx.out_dir);
    check_labels(&cfg.recipes)?;
    if cfg.recipes.len() < 2 {
        return Err(CoreError::TooFewModels { needed: 2, got: cfg.recipes.len() }.into());
    }
    let mut guarded: Vec<PathBuf> =
        cfg.recipes.iter().map(|r| suite_dir.join(format!("{}.model.json", r.label))).collect();
    guarded.push(suite_dir.join(MANIFEST_FILE));
    guarded.push(ctx.config_path("train"));
    ctx.guard(&guarded)?;

    let train_set = io::read_dataset(&data_dir, Split::Train)?;
    let ood = io::read_dataset(&data_dir, Split::OodFull)?;
    let pool = io::read_dataset(&data_dir, Split::InoculationPool)?;
    let data = TaskData { task: cfg.task, train: &train_set, ood: &ood, pool: &pool };
    log::info!("training {} recipes on {} examples", cfg.recipes.len(), train_set.len());
    let results: Vec<_> = cfg
        .recipes
        .par_iter()
        .map(|recipe| {
            let outcome = train_recipe(data, recipe);
            match &outcome {
                Ok(m) => log::info!("{}: ood accuracy {:.4}", recipe.label, m.ood_accuracy),
                Err(e) => log::warn!("{}: excluded ({e})", recipe.label),
            }
            (recipe.clone(), outcome)
        })
        .collect();
    let numeric_failure =
        results.iter().find_map(|(_, r)| r.as_ref().err().filter(|e| matches!(e, CoreError::Divergence { .. } | CoreError::NonFiniteGradient { .. })).cloned());
    let suite = match ModelSuite::from_results(results) {
        Ok(suite) => suite,
        Err(e) => return Err(numeric_failure.unwrap_or(e).into()),
    };

    let vocab = &train_set.vocabulary;
    let mut members = Vec::new();
    for member in &suite.members {
        let file = format!("{}.model.json", member.label);
        io::write_checkpoint(&suite_dir.join(&file), &member.model, vocab)?;
        members.push(ManifestMember::new(&member.label, &file, member.ood_accuracy, &member.report, &member.recipe));
    }
    let manifest = SuiteManifest {
        task: cfg.task,
        vocab_digest: vocab.digest(),
        train_digest: train_set.digest(),
        ood_full_digest: ood.digest(),
        members,
        excluded: suite
            .excluded
            .iter()
            .map(|(label, e)| io::ExcludedRecipe { label: label.clone(), error: e.to_string() })
            .collect(),
        v: FORMAT_VERSION,
    };
    let manifest_path = suite_dir.join(MANIFEST_FILE);
    io::write_json(&manifest_path, &manifest)?;
    let config_path = write_config(config, ctx)?;
    let s: BTreeMap<&str, f64> = manifest.members.iter().map(|m| (m.label.as_str(), m.ood_accuracy)).collect();
    Ok(json!({
        "command": "train",
        "status": "ok",
        "manifest": manifest_path,
        "models": manifest.members.len(),
        "excluded": manifest.excluded.len(),
        "ood_accuracy": s,
        "config": config_path,
    }))
}

pub fn store_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("{}.jsonl", method.name().to_ascii_lowercase()))
}

fn load_models(suite_dir: &Path, manifest: &SuiteManifest, vocab: &Vocabulary) -> Result<Vec<Model>> {
    if manifest.vocab_digest != vocab.digest() {
        return Err(AppError::Data("suite was trained on a different vocabulary".into()));
    }
    manifest.members.iter().map(|m| io::read_checkpoint(&suite_dir.join(&m.checkpoint), vocab)).collect()
}

fn attribute(config: &RunConfig, cfg: &AttributeStage, ctx: &Context) -> Result<Value> {
    let data_dir = cfg.paths.data(&ctx.out_dir);
    let suite_dir = cfg.paths.suite(&ctx.out_dir);
    let method = cfg.method.method();
    let path = store_path(&cfg.paths.store(&ctx.out_dir), method);
    let manifest = io::read_manifest(&suite_dir.join(MANIFEST_FILE))?;
    let population = io::read_dataset(&data_dir, Split::OodPopulation)?;
    let vocab = population.vocabulary.clone();
    let models = load_models(&suite_dir, &manifest, &vocab)?;
    let digest = cfg.method.digest();

    if ctx.overwrite && path.exists() {
        fs::remove_file(&path).map_err(|e| AppError::io(&path, e))?;
    }
    let mut rows = io::read_store_lenient(&path, &digest)?;
    let expected: Vec<(usize, usize)> =
        (0..models.len()).flat_map(|m| (0..population.len()).map(move |e| (m, e))).collect();
    let key = |m: usize, e: usize| (manifest.members[m].label.clone(), population.examples[e].id.clone());
    let wanted: std::collections::BTreeSet<_> = expected.iter().map(|&(m, e)| key(m, e)).collect();
    rows.retain(|k, _| wanted.contains(k));
    let reused = rows.len();
    let todo: Vec<(usize, usize)> = expected.iter().copied().filter(|&(m, e)| !rows.contains_key(&key(m, e))).collect();
    log::info!(
        "{}: {} rows expected ({} models x {} examples), {reused} reused, {} to compute",
        method,
        expected.len(),
        models.len(),
        population.len(),
        todo.len()
    );

    let mut skipped = Vec::new();
    let mut done = 0usize;
    for chunk in todo.chunks(STORE_CHUNK) {
        let results: Vec<std::result::Result<Attribution, CoreError>> = chunk
            .par_iter()
            .map(|&(m, e)| explain(&models[m], &manifest.members[m].label, &vocab, &population.examples[e], &cfg.method))
            .collect();
        let mut fresh = Vec::new();
        for (&(m, e), result) in chunk.iter().zip(results) {
            match result {
                Ok(row) => {
                    for w in &row.warnings {
                        log::warn!("{w}");
                    }
                    fresh.push(row);
                }
                Err(err @ CoreError::TooManyPlayers { .. }) => {
                    let (model, example) = key(m, e);
                    log::warn!("skipping ({model}, {example}): {err}");
                    skipped.push(json!({"model": model, "example_id": example, "reason": err.to_string()}));
                }
                Err(err) => return Err(err.into()),
            }
        }
        io::append_rows(&path, &fresh)?;
        done += chunk.len();
        log::info!("{method}: {done}/{} computed", todo.len());
        for row in fresh {
            rows.insert((row.model.clone(), row.example_id.clone()), row);
        }
    }

    // canonical order: suite order, then population order
    let ordered: Vec<&Attribution> = expected.iter().filter_map(|&(m, e)| rows.get(&key(m, e))).collect();
    io::write_atomic(&path, &io::jsonl_bytes(ordered.iter().copied())?)?;
    let config_path = write_config(config, ctx)?;
    Ok(json!({
        "command": "attribute",
        "status": "ok",
        "method": method.name(),
        "store": path,
        "expected_rows": expected.len(),
        "rows": ordered.len(),
        "reused": reused,
        "skipped": skipped,
        "config_digest": digest,
        "config": config_path,
    }))
}

/// Everything `eval` writes to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub report: BootstrapReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<MethodResult>,
    pub significance: Vec<Significance>,
    pub v: u32,
}

#[derive(Serialize)]
struct ReportRow<'a> {
    method: &'a str,
    scope: &'a str,
    model_a: &'a str,
    model_b: &'a str,
    s_a: Option<f64>,
    s_b: Option<f64>,
    accuracy: f64,
}

#[derive(Serialize)]
struct FactorRow<'a> {
    example_id: &'a str,
    model: &'a str,
    factor: &'a str,
    value: f64,
}

fn eval(config: &RunConfig, cfg: &EvalStage, ctx: &Context) -> Result<Value> {
    let data_dir = cfg.paths.data(&ctx.out_dir);
    let suite_dir = cfg.paths.suite(&ctx.out_dir);
    let eval_dir = cfg.paths.eval(&ctx.out_dir);
    let report_path = eval_dir.join("report.json");
    let csv_path = eval_dir.join("report.csv");
    let values_path = eval_dir.join("factor_values.csv");
    ctx.guard(&[report_path.clone(), csv_path.clone(), ctx.config_path("eval")])?;
    if cfg.factors.is_empty() && cfg.baselines.is_empty() {
        return Err(AppError::Usage("nothing to evaluate: give at least one factor or baseline".into()));
    }

    let manifest = io::read_manifest(&suite_dir.join(MANIFEST_FILE))?;
    let population = io::read_dataset(&data_dir, Split::OodPopulation)?;
    let labels = manifest.labels();
    let models: Vec<ModelScore> =
        manifest.members.iter().map(|m| ModelScore { label: m.label.clone(), s: m.ood_accuracy }).collect();

    let needs_store = !cfg.factors.is_empty()
        || cfg.baselines.iter().any(|b| !matches!(b, BaselineKind::Random | BaselineKind::Guess));
    let store_file = store_path(&cfg.paths.store(&ctx.out_dir), cfg.attribution);
    let store = if needs_store { io::read_store(&store_file)? } else { Default::default() };
    let lookup = |model: &str, id: &str| store.get(&(model.to_string(), id.to_string()));

    let mut inputs = Vec::new();
    let mut factor_rows = Vec::new();
    for &factor in &cfg.factors {
        let source = RankSource::Factor(factor);
        let table =
            score_table(source, &labels, &population.examples, lookup, &cfg.factor_options, cfg.normalization)?;
        if cfg.export_factor_values {
            for (m, row) in table.iter().enumerate() {
                for (e, &value) in row.iter().enumerate() {
                    factor_rows.push((population.examples[e].id.clone(), labels[m].clone(), factor.name(), value));
                }
            }
        }
        inputs.push(MethodInput { name: factor.name().into(), convention: Convention::Factor, scores: MethodScores::Table(table) });
    }
    let mut want_guess = false;
    for &baseline in &cfg.baselines {
        match baseline {
            BaselineKind::Random => inputs.push(MethodInput::random()),
            BaselineKind::Guess => want_guess = true,
            _ => {
                let source = RankSource::Baseline(baseline);
                let table =
                    score_table(source, &labels, &population.examples, lookup, &cfg.factor_options, cfg.normalization)?;
                inputs.push(MethodInput { name: baseline.name().into(), convention: Convention::Baseline, scores: MethodScores::Table(table) });
            }
        }
    }

    let mut report = if inputs.is_empty() {
        None
    } else {
        let protocol = Protocol::new(models.clone(), population.len(), population.digest(), inputs, cfg.bootstrap.clone())?;
        let outcomes = (0..cfg.bootstrap.samples).into_par_iter().map(|b| protocol.evaluate_sample(b)).collect();
        Some(protocol.assemble(outcomes)?)
    };
    let guess = if want_guess {
        let prior = cfg.guess_prior.clone().unwrap_or_else(|| vec![1.0 / models.len() as f64; models.len()]);
        Some(guess_baseline(&models, &prior)?)
    } else {
        None
    };
    let report = match report.take() {
        Some(mut r) => {
            let prov = &mut r.provenance;
            prov.insert("attribution_method".into(), cfg.attribution.name().into());
            prov.insert("normalization".into(), cfg.normalization.name().into());
            prov.insert("half_width".into(), cfg.factor_options.half_width.to_string());
            prov.insert("surface_fallback".into(), cfg.factor_options.surface_fallback.to_string());
            if needs_store {
                prov.insert("store_digest".into(), io::file_digest(&store_file)?);
            }
            prov.insert("suite_task".into(), manifest.task.name().into());
            let fallback = cfg
                .factors
                .iter()
                .map(|&f| population.examples.iter().filter(|e| uses_surface_fallback(f, e, &cfg.factor_options)).count())
                .sum::<usize>();
            if fallback > 0 {
                log::warn!("{fallback} examples used surface matching for shared words");
                prov.insert("surface_fallback_examples".into(), fallback.to_string());
            }
            r
        }
        None => BootstrapReport {
            population_digest: population.digest(),
            population_size: population.len(),
            config: cfg.bootstrap.clone(),
            models: models.clone(),
            pairs: Vec::new(),
            excluded_pairs: Vec::new(),
            methods: Vec::new(),
            provenance: BTreeMap::new(),
        },
    };

    let mut significance = Vec::new();
    let sampled_baselines: Vec<&MethodResult> =
        report.methods.iter().filter(|m| m.convention == Convention::Baseline).collect();
    for factor in report.methods.iter().filter(|m| m.convention == Convention::Factor) {
        for baseline in &sampled_baselines {
            significance.push(paired_significance(factor, baseline, cfg.alpha)?);
        }
    }

    let output = EvalOutput { report, guess, significance, v: FORMAT_VERSION };
    let (report, guess) = (&output.report, &output.guess);
    let mut csv_rows = Vec::new();
    let pairs_of = |m: &MethodResult| -> Vec<(String, String, f64, f64)> {
        if m.name == BaselineKind::Guess.name() {
            let mut out = Vec::new();
            for i in 0..models.len() {
                for j in i + 1..models.len() {
                    if models[i].s != models[j].s {
                        out.push((models[i].label.clone(), models[j].label.clone(), models[i].s, models[j].s));
                    }
                }
            }
            out
        } else {
            report.pairs.iter().map(|p| (p.a.clone(), p.b.clone(), p.s_a, p.s_b)).collect()
        }
    };
    let all_methods: Vec<&MethodResult> = report.methods.iter().chain(guess.iter()).collect();
    let pair_lists: Vec<_> = all_methods.iter().map(|m| pairs_of(m)).collect();
    for (m, pairs) in all_methods.iter().zip(&pair_lists) {
        for ((a, b, s_a, s_b), &accuracy) in pairs.iter().zip(&m.pair_accuracies) {
            csv_rows.push(ReportRow { method: &m.name, scope: "pair", model_a: a, model_b: b, s_a: Some(*s_a), s_b: Some(*s_b), accuracy });
        }
        csv_rows.push(ReportRow { method: &m.name, scope: "all", model_a: "", model_b: "", s_a: None, s_b: None, accuracy: m.few_shot_accuracy });
    }

    io::write_json(&report_path, &output)?;
    io::write_csv(&csv_path, csv_rows)?;
    if cfg.export_factor_values {
        io::write_csv(
            &values_path,
            factor_rows.iter().map(|(id, model, factor, value)| FactorRow { example_id: id, model, factor, value: *value }),
        )?;
    }
    let config_path = write_config(config, ctx)?;
    let accuracies: BTreeMap<&str, f64> =
        output.report.methods.iter().chain(output.guess.iter()).map(|m| (m.name.as_str(), m.few_shot_accuracy)).collect();
    Ok(json!({
        "command": "eval",
        "status": "ok",
        "report": report_path,
        "csv": csv_path,
        "few_shot_accuracy": accuracies,
        "population_digest": output.report.population_digest,
        "config": config_path,
    }))
}

fn report_pool(config: &RunConfig, cfg: &PoolStage, ctx: &Context) -> Result<Value> {
    if cfg.entries.is_empty() {
        return Err(AppError::Usage("report-pool needs at least one --entry".into()));
    }
    let out = cfg.output.clone().unwrap_or_else(|| ctx.out_dir.join("pool"));
    let json_path = out.join("pooled.json");
    let csv_path = out.join("pooled.csv");
    ctx.guard(&[json_path.clone(), csv_path.clone(), ctx.config_path("report-pool")])?;
    let outputs: Vec<EvalOutput> = cfg.entries.iter().map(|e| io::read_json(&e.report)).collect::<Result<_>>()?;
    for (entry, output) in cfg.entries.iter().zip(&outputs) {
        if output.v != FORMAT_VERSION {
            return Err(AppError::Data(format!("{}: unsupported report version {}", entry.report.display(), output.v)));
        }
    }
    let owned: Vec<BootstrapReport> = outputs
        .iter()
        .map(|o| {
            let mut r = o.report.clone();
            r.methods.extend(o.guess.clone());
            r
        })
        .collect();
    let entries: Vec<(String, &BootstrapReport, String)> =
        cfg.entries.iter().zip(&owned).map(|(e, r)| (e.set.clone(), r, e.method.clone())).collect();
    let pooled = pooled_report(&entries)?;
    io::write_json(&json_path, &pooled)?;
    io::write_csv(&csv_path, &pooled.pairs)?;
    let config_path = write_config(config, ctx)?;
    Ok(json!({
        "command": "report-pool",
        "status": "ok",
        "accuracy": pooled.accuracy,
        "pairs": pooled.pairs.len(),
        "output": json_path,
        "config": config_path,
    }))
}

pub fn read_eval_output(path: &Path) -> Result<EvalOutput> {
    io::read_json(path)
}

pub fn load_population(data_dir: &Path) -> Result<Dataset> {
    io::read_dataset(data_dir, Split::OodPopulation)
}
