//! Synthetic in-domain and out-of-domain datasets with planted heuristics.
//!
//! Every generator is a pure function of its parameters and seed. Training
//! splits are ambiguous (the shortcut and the intended rule mostly agree),
//! OOD splits separate them with balanced labels.

mod inoculation;
mod msgs;
mod pairs;
mod vocab;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::digest_strs;

pub use inoculation::{inoculation_mix, InoculationSplit, INOCULATION_RECIPES};
pub use msgs::{gen_msgs, FeatureKind};
pub use pairs::{gen_pair_control, gen_pair_subseq, gen_pair_swap, PairConfig};
pub use vocab::{
    TokenId, Vocabulary, VocabularyParts, WordClass, CLS, CLS_ID, MASK, MASK_ID, SEP, SEP_ID, THE,
};

/// Generators refuse to build splits smaller than this.
pub const MIN_COUNT: usize = 10;

/// Optional factor metadata. Indices are positions within a segment, except
/// `separator_index`, which addresses the flattened sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_index_pairs: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_indices_a: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_indices_b: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separator_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub segments: Vec<Vec<String>>,
    pub label: u8,
    #[serde(default)]
    pub meta: Meta,
}

impl Example {
    pub fn layout(&self) -> Layout {
        Layout::new(self.segments.iter().map(Vec::len).collect())
    }

    pub fn segment_a(&self) -> &[String] {
        self.segments.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn segment_b(&self) -> Option<&[String]> {
        self.segments.get(1).map(Vec::as_slice)
    }

    /// Flattened token ids: `[CLS] a.. [SEP]` or `[CLS] a.. [SEP] b.. [SEP]`.
    pub fn encode(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        let mut ids = Vec::with_capacity(self.layout().len());
        ids.push(CLS_ID);
        for segment in &self.segments {
            ids.extend(segment.iter().map(|w| vocab.id_or_mask(w)));
            ids.push(SEP_ID);
        }
        ids
    }

    /// Checks the structural invariants: label is binary, at most two
    /// segments, and every metadata index is in range.
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::Validation(alloc::format!("example {}: {what}", self.id)))
        };
        if self.label > 1 {
            return fail("label must be 0 or 1");
        }
        if self.segments.is_empty() || self.segments.len() > 2 {
            return fail("expected one or two segments");
        }
        let len_a = self.segments[0].len();
        let len_b = self.segments.get(1).map(Vec::len);
        let meta = &self.meta;
        if meta.feature_index.is_some_and(|m| m >= len_a) {
            return fail("feature_index out of range");
        }
        if meta.control_index.is_some_and(|c| c >= len_a) {
            return fail("control_index out of range");
        }
        if meta.swap_indices_a.as_ref().is_some_and(|v| v.iter().any(|&i| i >= len_a)) {
            return fail("swap_indices_a out of range");
        }
        let b_ok = |i: usize| len_b.is_some_and(|n| i < n);
        if meta.swap_indices_b.as_ref().is_some_and(|v| v.iter().any(|&i| !b_ok(i))) {
            return fail("swap_indices_b out of range");
        }
        if let Some(pairs) = &meta.shared_index_pairs {
            if pairs.iter().any(|&(i, j)| i >= len_a || !b_ok(j)) {
                return fail("shared_index_pairs out of range");
            }
        }
        match (len_b, meta.separator_index) {
            (Some(_), Some(sep)) if sep != len_a + 1 => fail("separator_index must address the first separator"),
            (None, Some(_)) => fail("single-segment example defines separator_index"),
            _ => Ok(()),
        }
    }
}

/// Positions of segments and structural tokens in the flattened sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segment_lens: Vec<usize>,
}

impl Layout {
    pub fn new(segment_lens: Vec<usize>) -> Self {
        Self { segment_lens }
    }

    /// Total flattened length including CLS and separators.
    pub fn len(&self) -> usize {
        1 + self.segment_lens.iter().map(|n| n + 1).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn segment_count(&self) -> usize {
        self.segment_lens.len()
    }

    pub fn segment_range(&self, segment: usize) -> Range<usize> {
        let start = 1 + self.segment_lens[..segment].iter().map(|n| n + 1).sum::<usize>();
        start..start + self.segment_lens[segment]
    }

    pub fn first_separator(&self) -> usize {
        self.segment_lens.first().map_or(1, |n| n + 1)
    }

    pub fn is_structural(&self, position: usize) -> bool {
        !(0..self.segment_count()).any(|s| self.segment_range(s).contains(&position))
    }

    /// Positions that perturbation methods may mask, in flattened order.
    pub fn word_positions(&self) -> Vec<usize> {
        (0..self.segment_count()).flat_map(|s| self.segment_range(s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    OodFull,
    OodPopulation,
    /// Disambiguating examples reserved for inoculation, disjoint from evaluation.
    InoculationPool,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::OodFull => "ood_full",
            Split::OodPopulation => "ood_population",
            Split::InoculationPool => "inoculation_pool",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub examples: Vec<Example>,
    pub vocabulary: Vocabulary,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let pos = self.examples.iter().filter(|e| e.label == 1).count();
        pos as f64 / self.examples.len() as f64
    }

    /// Order-sensitive digest of the example ids.
    pub fn digest(&self) -> String {
        digest_strs(self.examples.iter().map(|e| e.id.as_str()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = alloc::collections::BTreeSet::new();
        for example in &self.examples {
            example.validate()?;
            if !seen.insert(example.id.as_str()) {
                return Err(Error::Validation(alloc::format!(
                    "duplicate example id `{}` in {}",
                    example.id,
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The six synthetic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "msgs-morph")]
    MsgsMorph,
    #[serde(rename = "msgs-verb")]
    MsgsVerb,
    #[serde(rename = "msgs-adject")]
    MsgsAdject,
    #[serde(rename = "hans-sub")]
    HansSub,
    #[serde(rename = "hans-con")]
    HansCon,
    #[serde(rename = "paws")]
    Paws,
}

impl Task {
    pub const ALL: [Task; 6] =
        [Task::MsgsMorph, Task::MsgsVerb, Task::MsgsAdject, Task::HansSub, Task::HansCon, Task::Paws];

    pub fn name(self) -> &'static str {
        match self {
            Task::MsgsMorph => "msgs-morph",
            Task::MsgsVerb => "msgs-verb",
            Task::MsgsAdject => "msgs-adject",
            Task::HansSub => "hans-sub",
            Task::HansCon => "hans-con",
            Task::Paws => "paws",
        }
    }

    pub fn feature_kind(self) -> Option<FeatureKind> {
        match self {
            Task::MsgsMorph => Some(FeatureKind::Morph),
            Task::MsgsVerb => Some(FeatureKind::Verb),
            Task::MsgsAdject => Some(FeatureKind::Adject),
            _ => None,
        }
    }

    pub fn is_pair(self) -> bool {
        self.feature_kind().is_none()
    }

    /// Default OOD population size for bootstrap sampling.
    pub fn default_population(self) -> usize {
        if self.is_pair() {
            600
        } else {
            500
        }
    }

    /// Runs the task's generator.
    pub fn generate(
        self,
        vocab: &Vocabulary,
        n_train: usize,
        n_ood: usize,
        seed: u64,
    ) -> Result<(Dataset, Dataset)> {
        match self.feature_kind() {
            Some(kind) => gen_msgs(vocab, kind, n_train, n_ood, seed),
            None => {
                let cfg = PairConfig::new(n_train, n_ood, self);
                match self {
                    Task::HansSub => gen_pair_subseq(vocab, &cfg, seed),
                    Task::HansCon => gen_pair_control(vocab, &cfg, seed),
                    _ => gen_pair_swap(vocab, &cfg, seed),
                }
            }
        }
    }

    /// Disambiguating examples for inoculation: an OOD-style split drawn from
    /// an independent seed, with ids distinct from the evaluation split.
    pub fn inoculation_pool(self, vocab: &Vocabulary, size: usize, seed: u64) -> Result<Dataset> {
        let (_, mut pool) = self.generate(vocab, MIN_COUNT, size, seed)?;
        pool.split = Split::InoculationPool;
        pool.name = alloc::format!("{}-pool", self.name());
        for example in &mut pool.examples {
            example.id = example.id.replace("-ood-", "-pool-");
        }
        Ok(pool)
    }

    /// Label predicted by the task's pathological heuristic: the surface cue
    /// for MSGS, "hypothesis is a contiguous subsequence" for the HANS
    /// analogs, and "equal bags of words" for the PAWS analog.
    pub fn heuristic_label(self, example: &Example) -> u8 {
        let a = example.segment_a();
        let b = example.segment_b().unwrap_or(&[]);
        let hit = match self {
            Task::MsgsMorph | Task::MsgsVerb | Task::MsgsAdject => a.iter().any(|w| w == THE),
            Task::HansSub | Task::HansCon => {
                !b.is_empty() && a.windows(b.len()).any(|window| window == b)
            }
            Task::Paws => {
                let mut bag_a: Vec<&String> = a.iter().collect();
                let mut bag_b: Vec<&String> = b.iter().collect();
                bag_a.sort();
                bag_b.sort();
                bag_a == bag_b
            }
        };
        u8::from(hit)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            Error::InvalidArgument(alloc::format!(
                "unknown task `{s}` (expected one of: {})",
                names.join(", ")
            ))
        })
    }
}

/// Aligns equal surface forms left to right: each token of `b` is matched
/// to the first unused equal token of `a`.
pub fn greedy_shared_pairs(a: &[String], b: &[String]) -> Vec<(usize, usize)> {
    let mut used = alloc::vec![false; a.len()];
    let mut pairs = Vec::new();
    for (j, word) in b.iter().enumerate() {
        if let Some(i) = (0..a.len()).find(|&i| !used[i] && &a[i] == word) {
            used[i] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

pub(crate) fn check_counts(n_train: usize, n_ood: usize) -> Result<()> {
    if n_train < MIN_COUNT || n_ood < MIN_COUNT {
        return Err(Error::InvalidArgument(alloc::format!(
            "split sizes must be at least {MIN_COUNT} (got train={n_train}, ood={n_ood})"
        )));
    }
    Ok(())
}

/// Exactly balanced label sequence of length `n` in seeded random order.
pub(crate) fn balanced_labels<R: rand::Rng>(n: usize, rng: &mut R) -> Vec<u8> {
    use rand::seq::SliceRandom;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    labels.shuffle(rng);
    labels
}

pub(crate) fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}
