//! Single-segment tasks where a linguistic feature and the surface word
//! "the" are conflated in training and separated out of domain.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{balanced_labels, check_counts, params, Dataset, Example, Meta, Provenance, Split};
use super::{Vocabulary, WordClass, THE};
use crate::error::Result;
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureKind {
    /// Irregular past-tense verb vs regular past tense.
    Morph,
    /// -ing verb vs present tense.
    Verb,
    /// Adjective vs noun in the modifier slot.
    Adject,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Morph => "MORPH",
            FeatureKind::Verb => "VERB",
            FeatureKind::Adject => "ADJECT",
        }
    }

    pub fn feature_class(self) -> WordClass {
        match self {
            FeatureKind::Morph => WordClass::IrregularPast,
            FeatureKind::Verb => WordClass::IngVerb,
            FeatureKind::Adject => WordClass::Adjective,
        }
    }

    pub fn contrast_class(self) -> WordClass {
        match self {
            FeatureKind::Morph => WordClass::RegularPast,
            FeatureKind::Verb => WordClass::PresentVerb,
            FeatureKind::Adject => WordClass::Noun,
        }
    }

    fn task_name(self) -> &'static str {
        match self {
            FeatureKind::Morph => "msgs-morph",
            FeatureKind::Verb => "msgs-verb",
            FeatureKind::Adject => "msgs-adject",
        }
    }
}

const REQUIRED: [WordClass; 8] = [
    WordClass::The,
    WordClass::Determiner,
    WordClass::Noun,
    WordClass::Adverb,
    WordClass::Preposition,
    WordClass::IrregularPast,
    WordClass::IngVerb,
    WordClass::Adjective,
];

pub(crate) fn pick<R: Rng>(rng: &mut R, vocab: &Vocabulary, class: WordClass) -> String {
    let ids = vocab.class(class).expect("word classes are checked before generation");
    let id = ids[rng.gen_range(0..ids.len())];
    vocab.surface(id).expect("class ids are in range").to_string()
}

/// Builds `det noun [adverb] SLOT mid.. DET' noun [tail..]`. The surface
/// determiner sits at least three positions after the slot, outside the
/// +-2 window around the feature-critical word. Returns the tokens and the
/// slot index.
fn sentence<R: Rng>(
    rng: &mut R,
    vocab: &Vocabulary,
    kind: FeatureKind,
    feature: bool,
    surface: bool,
) -> (Vec<String>, usize) {
    let mut words = Vec::with_capacity(12);
    words.push(pick(rng, vocab, WordClass::Determiner));
    words.push(pick(rng, vocab, WordClass::Noun));
    if rng.gen_bool(0.5) {
        words.push(pick(rng, vocab, WordClass::Adverb));
    }
    let slot = words.len();
    let class = if feature { kind.feature_class() } else { kind.contrast_class() };
    words.push(pick(rng, vocab, class));
    let mid = rng.gen_range(2..=3);
    for _ in 0..mid {
        let class = if rng.gen_bool(0.5) { WordClass::Preposition } else { WordClass::Adverb };
        words.push(pick(rng, vocab, class));
    }
    if surface {
        words.push(THE.to_string());
    }
    words.push(pick(rng, vocab, WordClass::Noun));
    for _ in 0..rng.gen_range(0..=2) {
        words.push(pick(rng, vocab, WordClass::Adverb));
    }
    (words, slot)
}

/// Generates an ambiguous training split and a disambiguating OOD split.
///
/// Train: feature and "the" co-occur (label 1) or are both absent (label 0).
/// OOD: feature without "the" is label 1, "the" without the feature is
/// label 0. Labels are exactly balanced in both splits; every example
/// records the feature slot as `feature_index`.
pub fn gen_msgs(
    vocab: &Vocabulary,
    kind: FeatureKind,
    n_train: usize,
    n_ood: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_counts(n_train, n_ood)?;
    vocab.require(&REQUIRED)?;
    vocab.require(&[kind.contrast_class()])?;
    let task = kind.task_name();

    let build = |split: Split, n: usize, label_seed: u64| {
        let mut rng = rng(label_seed);
        let labels = balanced_labels(n, &mut rng);
        let examples = labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let positive = label == 1;
                let (feature, surface) = match split {
                    Split::Train => (positive, positive),
                    _ => (positive, !positive),
                };
                let (words, slot) = sentence(&mut rng, vocab, kind, feature, surface);
                Example {
                    id: alloc::format!("{task}-{}-{i:05}", short(split)),
                    segments: alloc::vec![words],
                    label,
                    meta: Meta { feature_index: Some(slot), ..Meta::default() },
                }
            })
            .collect();
        Dataset {
            name: alloc::format!("{task}-{}", split.name()),
            split,
            examples,
            vocabulary: vocab.clone(),
            provenance: Provenance {
                generator: "gen_msgs".into(),
                seed,
                params: params(&[
                    ("feature_kind", kind.name().into()),
                    ("n_train", n_train.to_string()),
                    ("n_ood", n_ood.to_string()),
                    ("templates", "synthetic".into()),
                ]),
            },
        }
    };

    let train = build(Split::Train, n_train, derive_seed(seed, "train"));
    let ood = build(Split::OodFull, n_ood, derive_seed(seed, "ood"));
    Ok((train, ood))
}

pub(crate) fn short(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::OodFull => "ood",
        Split::OodPopulation => "pop",
        Split::InoculationPool => "pool",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;
    use crate::error::Error;

    fn has_class(vocab: &Vocabulary, ex: &Example, class: WordClass) -> bool {
        ex.segment_a().iter().any(|w| vocab.contains_in(class, w))
    }

    #[test]
    fn training_split_is_ambiguous() {
        let vocab = Vocabulary::standard();
        let (train, _) = gen_msgs(&vocab, FeatureKind::Morph, 1000, 500, 7).unwrap();
        assert_eq!(train.len(), 1000);
        for ex in &train.examples {
            let verb = has_class(&vocab, ex, WordClass::IrregularPast);
            let the = ex.segment_a().iter().any(|w| w == THE);
            assert_eq!(verb, ex.label == 1, "{ex:?}");
            assert_eq!(the, ex.label == 1, "{ex:?}");
        }
    }

    #[test]
    fn ood_split_disambiguates_and_is_balanced() {
        let vocab = Vocabulary::standard();
        for kind in [FeatureKind::Morph, FeatureKind::Verb, FeatureKind::Adject] {
            let (_, ood) = gen_msgs(&vocab, kind, 100, 500, 7).unwrap();
            assert!((ood.positive_fraction() - 0.5).abs() <= 0.02);
            for ex in &ood.examples {
                let feature = has_class(&vocab, ex, kind.feature_class());
                let the = ex.segment_a().iter().any(|w| w == THE);
                assert_ne!(feature, the);
                assert_eq!(ex.label, u8::from(feature));
                let m = ex.meta.feature_index.unwrap();
                let slot_word = &ex.segment_a()[m];
                let expected = if ex.label == 1 { kind.feature_class() } else { kind.contrast_class() };
                assert!(vocab.contains_in(expected, slot_word));
                // surface cue stays outside the +-2 window
                if let Some(pos) = ex.segment_a().iter().position(|w| w == THE) {
                    assert!(pos > m + 2);
                }
                let n = ex.segment_a().len();
                assert!((5..=12).contains(&n));
            }
            ood.validate().unwrap();
        }
    }

    #[test]
    fn surface_heuristic_fails_on_ood() {
        let vocab = Vocabulary::standard();
        let (_, ood) = gen_msgs(&vocab, FeatureKind::Verb, 100, 400, 3).unwrap();
        let correct = ood
            .examples
            .iter()
            .filter(|e| Task::MsgsVerb.heuristic_label(e) == e.label)
            .count();
        assert_eq!(correct, 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let vocab = Vocabulary::standard();
        let a = gen_msgs(&vocab, FeatureKind::Adject, 50, 50, 11).unwrap();
        let b = gen_msgs(&vocab, FeatureKind::Adject, 50, 50, 11).unwrap();
        let c = gen_msgs(&vocab, FeatureKind::Adject, 50, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.examples, c.0.examples);
    }

    #[test]
    fn rejects_incomplete_vocabulary_and_small_counts() {
        let vocab = Vocabulary::standard().without_class(WordClass::IrregularPast);
        assert_eq!(
            gen_msgs(&vocab, FeatureKind::Morph, 100, 100, 1).unwrap_err(),
            Error::MissingWordClass(WordClass::IrregularPast)
        );
        let vocab = Vocabulary::standard();
        assert!(matches!(
            gen_msgs(&vocab, FeatureKind::Morph, 9, 100, 1),
            Err(Error::InvalidArgument(_))
        ));
    }
}
