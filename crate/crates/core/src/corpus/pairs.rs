//! Two-segment tasks: subsequence (HANS-SUB analog), control word
//! (HANS-CON analog) and word swap (PAWS analog).

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::msgs::{pick, short};
use super::{balanced_labels, check_counts, greedy_shared_pairs, params, Dataset, Example, Meta};
use super::{Provenance, Split, Task, Vocabulary, WordClass};
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PairConfig {
    pub n_train: usize,
    pub n_ood: usize,
    /// Fraction of training examples on which the task heuristic predicts the
    /// gold label. Must lie in [0.5, 1].
    pub agreement: f64,
}

impl PairConfig {
    /// Defaults: 90% agreement for the HANS analogs, 95% for the PAWS analog.
    pub fn new(n_train: usize, n_ood: usize, task: Task) -> Self {
        let agreement = if task == Task::Paws { 0.95 } else { 0.9 };
        Self { n_train, n_ood, agreement }
    }

    fn check(&self) -> Result<()> {
        check_counts(self.n_train, self.n_ood)?;
        if !(0.5..=1.0).contains(&self.agreement) {
            return Err(Error::InvalidArgument(alloc::format!(
                "heuristic agreement must lie in [0.5, 1], got {}",
                self.agreement
            )));
        }
        Ok(())
    }
}

/// Training example kinds. `Agree*` kinds match the heuristic, `Conflict`
/// is the minority kind where the heuristic errs.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Positive,
    Conflict,
    Distractor,
}

/// Training kinds: half positive, `1 - agreement` conflicts, the rest
/// heuristic-agreeing negatives.
fn training_kinds<R: Rng>(n: usize, agreement: f64, rng: &mut R) -> Vec<Kind> {
    let positives = n / 2;
    let conflicts = libm::round((1.0 - agreement) * n as f64) as usize;
    let conflicts = conflicts.min(n - positives);
    let mut kinds: Vec<Kind> = (0..n)
        .map(|i| {
            if i < positives {
                Kind::Positive
            } else if i < positives + conflicts {
                Kind::Conflict
            } else {
                Kind::Distractor
            }
        })
        .collect();
    kinds.shuffle(rng);
    kinds
}

fn ood_kinds<R: Rng>(n: usize, rng: &mut R) -> Vec<Kind> {
    balanced_labels(n, rng)
        .into_iter()
        .map(|l| if l == 1 { Kind::Positive } else { Kind::Conflict })
        .collect()
}

/// A word of `class` that does not occur in `avoid`.
fn pick_unseen<R: Rng>(rng: &mut R, vocab: &Vocabulary, class: WordClass, avoid: &[String]) -> String {
    loop {
        let word = pick(rng, vocab, class);
        if !avoid.contains(&word) {
            return word;
        }
    }
}

fn assemble(
    task: Task,
    split: Split,
    vocab: &Vocabulary,
    seed: u64,
    cfg: &PairConfig,
    examples: Vec<Example>,
) -> Dataset {
    Dataset {
        name: alloc::format!("{}-{}", task.name(), split.name()),
        split,
        examples,
        vocabulary: vocab.clone(),
        provenance: Provenance {
            generator: alloc::format!("gen_pair_{}", match task {
                Task::HansSub => "subseq",
                Task::HansCon => "control",
                _ => "swap",
            }),
            seed,
            params: params(&[
                ("n_train", cfg.n_train.to_string()),
                ("n_ood", cfg.n_ood.to_string()),
                ("agreement", alloc::format!("{}", cfg.agreement)),
                ("templates", "synthetic".into()),
            ]),
        },
    }
}

fn generate<F>(task: Task, vocab: &Vocabulary, cfg: &PairConfig, seed: u64, mut make: F) -> (Dataset, Dataset)
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng, Kind) -> (Vec<String>, Vec<String>, u8, Meta),
{
    let mut build = |split: Split, kinds: Vec<Kind>, rng: &mut rand_chacha::ChaCha8Rng| {
        let examples = kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| {
                let (a, b, label, mut meta) = make(rng, kind);
                meta.separator_index = Some(a.len() + 1);
                Example {
                    id: alloc::format!("{}-{}-{i:05}", task.name(), short(split)),
                    segments: alloc::vec![a, b],
                    label,
                    meta,
                }
            })
            .collect();
        assemble(task, split, vocab, seed, cfg, examples)
    };
    let mut train_rng = rng(derive_seed(seed, "train"));
    let kinds = training_kinds(cfg.n_train, cfg.agreement, &mut train_rng);
    let train = build(Split::Train, kinds, &mut train_rng);
    let mut ood_rng = rng(derive_seed(seed, "ood"));
    let kinds = ood_kinds(cfg.n_ood, &mut ood_rng);
    let ood = build(Split::OodFull, kinds, &mut ood_rng);
    (train, ood)
}

/// Subsequence task. The premise carries a modifier slot holding either a
/// hedge word or a negator; the hypothesis is a contiguous slice of the
/// premise. A negator outside the slice makes the pair non-entailed, so the
/// "subsequence means entailed" heuristic is at chance on the OOD split.
pub fn gen_pair_subseq(vocab: &Vocabulary, cfg: &PairConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    cfg.check()?;
    vocab.require(&[
        WordClass::Determiner,
        WordClass::Noun,
        WordClass::RegularPast,
        WordClass::Preposition,
        WordClass::Adverb,
        WordClass::Negator,
        WordClass::Hedge,
    ])?;
    Ok(generate(Task::HansSub, vocab, cfg, seed, |rng, kind| {
        let mut a = Vec::with_capacity(10);
        if rng.gen_bool(0.5) {
            a.push(pick(rng, vocab, WordClass::Adverb));
        }
        a.push(pick(rng, vocab, WordClass::Determiner));
        a.push(pick(rng, vocab, WordClass::Noun));
        let modifier = a.len();
        // Positive pairs may carry the negator inside the hypothesis span.
        let negated = match kind {
            Kind::Positive => rng.gen_bool(0.5),
            Kind::Conflict => true,
            Kind::Distractor => rng.gen_bool(0.5),
        };
        let class = if negated { WordClass::Negator } else { WordClass::Hedge };
        a.push(pick(rng, vocab, class));
        a.push(pick(rng, vocab, WordClass::RegularPast));
        a.push(pick(rng, vocab, WordClass::Preposition));
        a.push(pick(rng, vocab, WordClass::Determiner));
        a.push(pick(rng, vocab, WordClass::Noun));
        if rng.gen_bool(0.5) {
            a.push(pick(rng, vocab, WordClass::Adverb));
        }
        let len = rng.gen_range(3..=4);
        let cover = match kind {
            Kind::Positive => negated || rng.gen_bool(0.5),
            Kind::Conflict => false,
            Kind::Distractor => rng.gen_bool(0.5),
        };
        let start = if cover {
            let lo = (modifier + 1).saturating_sub(len);
            rng.gen_range(lo..=modifier)
        } else {
            rng.gen_range(modifier + 1..=a.len() - len)
        };
        let mut b: Vec<String> = a[start..start + len].to_vec();
        let mut pairs: Vec<(usize, usize)> = (0..len).map(|t| (start + t, t)).collect();
        if kind == Kind::Distractor {
            // break the subsequence by substituting one content word
            let t = rng.gen_range(0..len);
            let class = [WordClass::Noun, WordClass::RegularPast, WordClass::Preposition]
                .into_iter()
                .find(|&c| vocab.contains_in(c, &b[t]))
                .unwrap_or(WordClass::Noun);
            b[t] = pick_unseen(rng, vocab, class, &a);
            pairs.retain(|&(_, j)| j != t);
        }
        let label = u8::from(kind == Kind::Positive);
        let meta = Meta { shared_index_pairs: Some(pairs), ..Meta::default() };
        (a, b, label, meta)
    }))
}

/// Control-word task. The premise is `INIT clause1 clause2`; the hypothesis
/// is clause1. A sentence-initial control word ("unless", "if", ...) makes
/// the pair non-entailed; a plain subordinator keeps it entailed. The
/// control slot is always index 0.
pub fn gen_pair_control(vocab: &Vocabulary, cfg: &PairConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    cfg.check()?;
    vocab.require(&[
        WordClass::Determiner,
        WordClass::Noun,
        WordClass::RegularPast,
        WordClass::IrregularPast,
        WordClass::Adverb,
        WordClass::Control,
        WordClass::Subordinator,
    ])?;
    Ok(generate(Task::HansCon, vocab, cfg, seed, |rng, kind| {
        let control = match kind {
            Kind::Positive => false,
            Kind::Conflict => true,
            Kind::Distractor => rng.gen_bool(0.5),
        };
        let init = if control { WordClass::Control } else { WordClass::Subordinator };
        let mut a = alloc::vec![pick(rng, vocab, init)];
        a.push(pick(rng, vocab, WordClass::Determiner));
        a.push(pick(rng, vocab, WordClass::Noun));
        a.push(pick(rng, vocab, WordClass::IrregularPast));
        if rng.gen_bool(0.5) {
            a.push(pick(rng, vocab, WordClass::Adverb));
        }
        let clause_end = a.len();
        a.push(pick(rng, vocab, WordClass::Determiner));
        a.push(pick(rng, vocab, WordClass::Noun));
        a.push(pick(rng, vocab, WordClass::RegularPast));
        a.push(pick(rng, vocab, WordClass::Determiner));
        a.push(pick(rng, vocab, WordClass::Noun));
        let mut b: Vec<String> = a[1..clause_end].to_vec();
        let mut pairs: Vec<(usize, usize)> = (0..b.len()).map(|t| (1 + t, t)).collect();
        if kind == Kind::Distractor {
            let (t, class) = if rng.gen_bool(0.5) {
                (1, WordClass::Noun)
            } else {
                (2, WordClass::IrregularPast)
            };
            b[t] = pick_unseen(rng, vocab, class, &a);
            pairs.retain(|&(_, j)| j != t);
        }
        let label = u8::from(kind == Kind::Positive);
        let meta = Meta {
            shared_index_pairs: Some(pairs),
            control_index: Some(0),
            ..Meta::default()
        };
        (a, b, label, meta)
    }))
}

/// Swap task. Two high-overlap sentences `... P1 X P2 Y ...`; the pair is a
/// paraphrase when X and Y keep their order and not when they are swapped.
/// Training negatives mostly replace a content word, so lexical overlap
/// tracks the label there; OOD pairs always have equal bags of words.
pub fn gen_pair_swap(vocab: &Vocabulary, cfg: &PairConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    cfg.check()?;
    vocab.require(&[
        WordClass::Determiner,
        WordClass::Noun,
        WordClass::RegularPast,
        WordClass::IrregularPast,
        WordClass::Adverb,
        WordClass::Place,
    ])?;
    for word in ["from", "to", "between", "and"] {
        if vocab.id(word).is_none() {
            return Err(Error::MissingWordClass(WordClass::Preposition));
        }
    }
    Ok(generate(Task::Paws, vocab, cfg, seed, |rng, kind| {
        let mut a = Vec::with_capacity(10);
        a.push(pick(rng, vocab, WordClass::Determiner));
        a.push(pick(rng, vocab, WordClass::Noun));
        let verb = if rng.gen_bool(0.5) { WordClass::IrregularPast } else { WordClass::RegularPast };
        a.push(pick(rng, vocab, verb));
        if rng.gen_bool(0.5) {
            a.push(pick(rng, vocab, WordClass::Adverb));
        }
        let (p1, p2) = if rng.gen_bool(0.5) { ("from", "to") } else { ("between", "and") };
        a.push(p1.to_string());
        let ix = a.len();
        a.push(pick(rng, vocab, WordClass::Place));
        a.push(p2.to_string());
        let iy = a.len();
        a.push(pick_unseen(rng, vocab, WordClass::Place, &a));
        if rng.gen_bool(0.5) {
            a.push(pick(rng, vocab, WordClass::Adverb));
        }
        let mut b = a.clone();
        match kind {
            Kind::Positive => {}
            Kind::Conflict => b.swap(ix, iy),
            Kind::Distractor => b[iy] = pick_unseen(rng, vocab, WordClass::Place, &a),
        }
        let label = u8::from(kind == Kind::Positive);
        let meta = Meta {
            shared_index_pairs: Some(greedy_shared_pairs(&a, &b)),
            swap_indices_a: Some(alloc::vec![ix, iy]),
            swap_indices_b: Some(alloc::vec![ix, iy]),
            ..Meta::default()
        };
        (a, b, label, meta)
    }))
}
