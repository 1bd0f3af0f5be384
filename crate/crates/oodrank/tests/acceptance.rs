//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use oodrank::cli::{resolve, Command, EvalArgs};
use oodrank::config::RunConfig;
use oodrank::io;
use oodrank::pipeline::{self, Context, EvalOutput};
use oodrank_core::attribution::{
    exact_shapley_game, integrated_gradients, kernel_shap_game, lime_game, AdditiveGame, CoalitionGame, IgConfig,
    KernelShapConfig, LimeConfig, Method, ModelGame, Normalization, ShapSampling,
};
use oodrank_core::corpus::{Example, Meta, Split, TokenId, Vocabulary};
use oodrank_core::evaluation::{
    bootstrap_eval, score_table, Convention, EvalConfig, MethodInput, MethodScores, ModelScore, RankSource,
};
use oodrank_core::factors::{FactorKind, FactorOptions};
use oodrank_core::model::{Architecture, Model, ModelSpec};
use oodrank_core::util::rng;
use rand::Rng;

struct Gate {
    failed: Vec<&'static str>,
}

impl Gate {
    fn check(&mut self, id: &'static str, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id}: {detail} [{:.1?}]", started.elapsed());
        if !pass {
            self.failed.push(id);
        }
    }
}

fn random_model(r: &mut impl Rng, vocab_size: usize, architecture: Architecture, scale: f64) -> Model {
    let hidden = match architecture {
        Architecture::MeanEmbedLinear => vec![],
        _ => vec![r.gen_range(4..12)],
    };
    let spec = ModelSpec { architecture, embed_dim: r.gen_range(3..9), hidden_dims: hidden, vocab_size, seed: r.gen() };
    let mut model = Model::init(spec).unwrap();
    model.params_mut().iter_mut().for_each(|p| *p *= scale);
    model
}

fn any_architecture(r: &mut impl Rng) -> Architecture {
    [Architecture::MeanEmbedLinear, Architecture::MeanEmbedMlp, Architecture::AttnPoolMlp][r.gen_range(0..3)]
}

fn random_example(r: &mut impl Rng, vocab: &Vocabulary, max_words: usize, id: usize) -> Example {
    let words = &vocab.tokens()[3..];
    let total = r.gen_range(2..=max_words);
    let split = if r.gen_bool(0.5) { r.gen_range(1..total) } else { total };
    let mut pick = |n: usize| (0..n).map(|_| words[r.gen_range(0..words.len())].clone()).collect::<Vec<_>>();
    let mut segments = vec![pick(split)];
    if split < total {
        segments.push(pick(total - split));
    }
    Example { id: format!("case-{id}"), segments, label: 0, meta: Meta::default() }
}

fn random_ids(r: &mut impl Rng, vocab_size: usize) -> Vec<TokenId> {
    let len = r.gen_range(3..14);
    (0..len).map(|_| r.gen_range(1..vocab_size) as TokenId).collect()
}

fn shapley_oracle(gate: &mut Gate) {
    let t = Instant::now();
    let vocab = Vocabulary::standard();
    let mut r = rng(101);
    let cases = 60;
    let mut worst = 0.0f64;
    let mut players = 0;
    for case in 0..cases {
        let architecture = any_architecture(&mut r);
        let model = random_model(&mut r, vocab.len(), architecture, 3.0);
        let example = random_example(&mut r, &vocab, 10, case);
        let game = ModelGame::new(&model, &vocab, &example, r.gen_range(0..2));
        players += game.players();
        let exact = exact_shapley_game(&game).unwrap();
        let cfg = KernelShapConfig { sampling: ShapSampling::FullEnum, ..Default::default() };
        let kernel = kernel_shap_game(&game, &cfg).unwrap();
        for (a, b) in exact.iter().zip(&kernel) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= 1e-6 && t.elapsed().as_secs() < 120;
    gate.check("1 shapley-oracle", pass, format!("{cases} cases, {players} tokens, max |diff| {worst:.2e} (tol 1e-6)"), t);
}

fn ig_completeness(gate: &mut Gate) {
    let t = Instant::now();
    let vocab_size = 40;
    let mut r = rng(202);
    let mut worst_mlp = 0.0f64;
    let mlp_cases = 120;
    for case in 0..mlp_cases {
        let architecture = if case % 2 == 0 { Architecture::MeanEmbedMlp } else { Architecture::AttnPoolMlp };
        let model = random_model(&mut r, vocab_size, architecture, 2.0);
        let ids = random_ids(&mut r, vocab_size);
        let class = r.gen_range(0..2);
        let phi = integrated_gradients(&model, &ids, class, &IgConfig { steps: 256 }).unwrap();
        let baseline = vec![0 as TokenId; ids.len()];
        let gap = model.logits_ids(&ids)[class] - model.logits_ids(&baseline)[class];
        worst_mlp = worst_mlp.max((phi.iter().sum::<f64>() - gap).abs());
    }
    let mut worst_linear = 0.0f64;
    let linear_cases = 40;
    for _ in 0..linear_cases {
        let model = random_model(&mut r, vocab_size, Architecture::MeanEmbedLinear, 2.0);
        let ids = random_ids(&mut r, vocab_size);
        let class = r.gen_range(0..2);
        let steps = r.gen_range(8..300);
        let phi = integrated_gradients(&model, &ids, class, &IgConfig { steps }).unwrap();
        let baseline = vec![0 as TokenId; ids.len()];
        let gap = model.logits_ids(&ids)[class] - model.logits_ids(&baseline)[class];
        worst_linear = worst_linear.max((phi.iter().sum::<f64>() - gap).abs());
    }
    let pass = worst_mlp <= 1e-4 && worst_linear <= 1e-12 && t.elapsed().as_secs() < 60;
    gate.check(
        "2 ig-completeness",
        pass,
        format!(
            "{mlp_cases} MLP cases max gap {worst_mlp:.2e} (tol 1e-4); {linear_cases} linear cases max gap {worst_linear:.2e} (tol 1e-12)"
        ),
        t,
    );
}

fn gradient_check(gate: &mut Gate) {
    let t = Instant::now();
    let vocab_size = 40;
    let mut r = rng(303);
    let cases = 120;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let architecture = any_architecture(&mut r);
        let model = random_model(&mut r, vocab_size, architecture, 2.0);
        let ids = random_ids(&mut r, vocab_size);
        let class = r.gen_range(0..2);
        let inputs = model.embed(&ids);
        let (_, analytic) = model.input_gradients(&inputs, class);
        let mut numeric = vec![0.0; inputs.len()];
        let mut probe = inputs.clone();
        for k in 0..inputs.len() {
            probe[k] = inputs[k] + h;
            let up = model.forward(&probe).logits[class];
            probe[k] = inputs[k] - h;
            let down = model.forward(&probe).logits[class];
            probe[k] = inputs[k];
            numeric[k] = (up - down) / (2.0 * h);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(f64::MIN_POSITIVE);
        worst = worst.max(norm(&diff) / scale);
    }
    gate.check("3 gradient-check", worst <= 1e-4, format!("{cases} cases, max relative error {worst:.2e} (tol 1e-4)"), t);
}

fn lime_additive(gate: &mut Gate) {
    let t = Instant::now();
    let mut r = rng(404);
    let mut worst = 0.0f64;
    let mut games = 0;
    for players in 3..=8 {
        for rep in 0..5 {
            let game = AdditiveGame {
                base: r.gen_range(-1.0..1.0),
                weights: (0..players).map(|_| r.gen_range(-1.0..1.0)).collect(),
            };
            let cfg = LimeConfig { n_samples: 2000, seed: 7 + rep, ..Default::default() };
            let fit = lime_game(&game, &cfg).unwrap();
            for (c, w) in fit.coefficients.iter().zip(&game.weights) {
                worst = worst.max((c - w).abs());
            }
            games += 1;
        }
    }
    gate.check("4 lime-additive", worst <= 0.02, format!("{games} games, 3-8 players, max |coef - w| {worst:.4} (tol 0.02)"), t);
}

fn random_calibration(gate: &mut Gate) {
    let t = Instant::now();
    let models: Vec<ModelScore> = [0.15, 0.35, 0.55, 0.7, 0.9]
        .iter()
        .enumerate()
        .map(|(i, &s)| ModelScore { label: format!("m{i}"), s })
        .collect();
    let mut accuracies = Vec::new();
    for seed in 0..3 {
        let cfg = EvalConfig { samples: 500, probe_size: 10, seed, keep_samples: false };
        let report = bootstrap_eval(models.clone(), 500, "calibration".into(), vec![MethodInput::random()], cfg).unwrap();
        accuracies.push(report.method("RANDOM").unwrap().few_shot_accuracy);
    }
    let pass = accuracies.iter().all(|a| (0.45..=0.55).contains(a));
    let shown: Vec<String> = accuracies.iter().map(|a| format!("{a:.4}")).collect();
    gate.check("5 random-calibration", pass, format!("5 models, B=500, n=10, seeds 0-2: {} (range [0.45, 0.55])", shown.join(" ")), t);
}

fn eval_args(attribution: Method) -> EvalArgs {
    EvalArgs {
        attribution,
        factors: vec![FactorKind::Window],
        baselines: oodrank::cli::DEFAULT_BASELINES.to_vec(),
        no_factors: false,
        normalization: Normalization::Raw,
        half_width: 2,
        surface_fallback: false,
        samples: 500,
        n: 10,
        alpha: 0.05,
        guess_prior: None,
        keep_samples: false,
        export_factor_values: false,
        data_dir: None,
        suite_dir: None,
        store_dir: None,
        eval_dir: None,
    }
}

/// Runs gen, train, attribute and eval with defaults; returns the resolved
/// configs in order.
fn full_pipeline(out: &Path, seed: u64) -> Vec<RunConfig> {
    let ctx = Context { out_dir: out.to_path_buf(), overwrite: false, jobs: 0 };
    let mut configs = Vec::new();
    let commands = [
        "gen --task msgs-morph",
        "train",
        "attribute --method exact-shap",
    ];
    for line in commands {
        let mut argv = vec!["oodrank"];
        argv.extend(line.split(' '));
        let cli = <oodrank::cli::Cli as clap::Parser>::parse_from(argv);
        let config = resolve(cli.command.as_ref().unwrap(), seed, out).unwrap();
        pipeline::run(&config, &ctx).unwrap();
        configs.push(config);
    }
    let config = resolve(&Command::Eval(eval_args(Method::ExactShap)), seed, out).unwrap();
    pipeline::run(&config, &ctx).unwrap();
    configs.push(config);
    configs
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var = |r: &[f64]| r.iter().map(|a| (a - mean).powi(2)).sum::<f64>();
    cov / (var(&rx) * var(&ry)).sqrt()
}

fn msgs_pattern(gate: &mut Gate, out: &Path, started: Instant) {
    let output: EvalOutput = io::read_json(&out.join("eval/report.json")).unwrap();
    let report = &output.report;
    let acc = report.method("ACC").unwrap().few_shot_accuracy;
    let window = report.method("WINDOW").unwrap();
    let s: Vec<f64> = report.models.iter().map(|m| m.s).collect();
    let shown: Vec<String> = report.models.iter().map(|m| format!("{}={:.3}", m.label, m.s)).collect();
    println!("     suite: {}", shown.join(" "));
    gate.check("6a acc-baseline", acc >= 0.80, format!("ACC few-shot accuracy {acc:.4} (min 0.80)"), started);
    gate.check(
        "6b window-vs-acc",
        window.few_shot_accuracy >= acc - 0.08,
        format!("WINDOW {:.4} vs ACC {acc:.4} (min ACC - 0.08 = {:.4})", window.few_shot_accuracy, acc - 0.08),
        started,
    );

    let means = window.population_means.as_ref().unwrap();
    let mut violations = 0;
    let mut compared = 0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if s[i] < s[j] {
                compared += 1;
                if means[i] <= means[j] {
                    violations += 1;
                }
            }
        }
    }
    let negated: Vec<f64> = means.iter().map(|m| -m).collect();
    let shown: Vec<String> = means.iter().map(|m| format!("{m:+.4}")).collect();
    gate.check(
        "6c window-monotone",
        violations == 0,
        format!(
            "population means {} strictly decrease with s on {compared} pairs with distinct s, {violations} violations; tie-aware Spearman {:.4}",
            shown.join(" "),
            spearman(&s, &negated)
        ),
        started,
    );

    let far = s.iter().flat_map(|a| s.iter().map(move |b| (a - b).abs())).fold(0.0, f64::max);
    let sig = output.significance.iter().find(|g| g.method_a == "WINDOW" && g.method_b == "RANDOM").unwrap();
    gate.check(
        "7 far-pair-significance",
        far >= 0.3 && sig.p_value < 0.05,
        format!("largest |ds| {far:.3}; WINDOW vs RANDOM p = {:.4} (alpha 0.05)", sig.p_value),
        started,
    );
}

fn flip_and_ties(gate: &mut Gate, out: &Path) {
    let t = Instant::now();
    let manifest = io::read_manifest(&out.join("suite/manifest.json")).unwrap();
    let population = io::read_dataset(&out.join("data"), Split::OodPopulation).unwrap();
    let store = io::read_store(&pipeline::store_path(&out.join("attributions"), Method::ExactShap)).unwrap();
    let labels = manifest.labels();
    let lookup = |m: &str, id: &str| store.get(&(m.to_string(), id.to_string()));
    let models: Vec<ModelScore> =
        manifest.members.iter().map(|m| ModelScore { label: m.label.clone(), s: m.ood_accuracy }).collect();
    let options = FactorOptions::default();
    let window =
        score_table(RankSource::Factor(FactorKind::Window), &labels, &population.examples, lookup, &options, Normalization::Raw)
            .unwrap();
    let negated: Vec<Vec<f64>> = window.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
    let mut noise = rng(505);
    let synthetic: Vec<Vec<f64>> =
        window.iter().map(|row| row.iter().map(|_| noise.gen_range(-1.0..1.0)).collect()).collect();
    let synthetic_neg: Vec<Vec<f64>> = synthetic.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
    let constant = vec![vec![0.25; population.len()]; labels.len()];
    let input = |name: &str, table: &Vec<Vec<f64>>| MethodInput {
        name: name.into(),
        convention: Convention::Factor,
        scores: MethodScores::Table(table.clone()),
    };
    let methods = vec![
        input("W", &window),
        input("W_NEG", &negated),
        input("N", &synthetic),
        input("N_NEG", &synthetic_neg),
        input("C", &constant),
    ];
    let cfg = EvalConfig { samples: 500, probe_size: 10, seed: 9, keep_samples: false };
    let report = bootstrap_eval(models, population.len(), population.digest(), methods, cfg).unwrap();
    let acc = |name: &str| report.method(name).unwrap().pair_accuracies.clone();
    let mut flip_err = 0.0f64;
    for (a, b) in [("W", "W_NEG"), ("N", "N_NEG")] {
        for (x, y) in acc(a).iter().zip(acc(b)) {
            flip_err = flip_err.max((x + y - 1.0).abs());
        }
    }
    let constant_ok = acc("C").iter().all(|&a| a == 0.5);
    let pairs = report.pairs.len();
    gate.check(
        "8 flip-and-ties",
        flip_err <= 1e-12 && constant_ok,
        format!("{pairs} pairs x 2 factors: max |a + a_neg - 1| {flip_err:.1e}; constant factor exactly 0.5 on every pair: {constant_ok}"),
        t,
    );
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism(gate: &mut Gate, first: &Path, configs: &[RunConfig], started: Instant) {
    let second = tempfile::tempdir().unwrap();
    let ctx = Context { out_dir: second.path().to_path_buf(), overwrite: false, jobs: 2 };
    for config in configs {
        let replay: RunConfig = io::read_json(&first.join(format!("{}.config.json", config.command.name()))).unwrap();
        assert_eq!(&replay, config);
        pipeline::run(&replay, &ctx).unwrap();
    }
    let (a, b) = (files(first), files(second.path()));
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let kinds = ["data/", "suite/", "attributions/", "eval/"];
    let covered = kinds.iter().all(|k| a.keys().any(|p| p.to_string_lossy().starts_with(k)));
    gate.check(
        "9 determinism",
        differing.is_empty() && covered,
        format!("{} files compared across two runs (jobs default vs 2), differing: {:?}", a.len(), differing),
        started,
    );
}

fn main() {
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let mut gate = Gate { failed: Vec::new() };
    shapley_oracle(&mut gate);
    ig_completeness(&mut gate);
    gradient_check(&mut gate);
    lime_additive(&mut gate);
    random_calibration(&mut gate);

    let t = Instant::now();
    let first = tempfile::tempdir().unwrap();
    let configs = full_pipeline(first.path(), 0);
    println!("     msgs-morph suite built in {:.1?}", t.elapsed());
    msgs_pattern(&mut gate, first.path(), t);
    flip_and_ties(&mut gate, first.path());
    determinism(&mut gate, first.path(), &configs, t);

    if gate.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", gate.failed.len(), gate.failed.join(", "));
        std::process::exit(1);
    }
}
