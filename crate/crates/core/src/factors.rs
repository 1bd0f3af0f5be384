//! Factors: scalar summaries of an attribution that track reliance on a
//! heuristic. Higher factor values predict worse out-of-domain performance.
//! Baselines score predictions directly and point the other way.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{greedy_shared_pairs, Example};
use crate::error::{Error, Result};

pub const DEFAULT_HALF_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FactorKind {
    Window,
    MaxDiff,
    SumDiff,
    IndexDiff,
    FirstTok,
    Const,
    SwapAvg,
    SwapMaxDiff,
}

impl FactorKind {
    pub const ALL: [FactorKind; 8] = [
        FactorKind::Window,
        FactorKind::MaxDiff,
        FactorKind::SumDiff,
        FactorKind::IndexDiff,
        FactorKind::FirstTok,
        FactorKind::Const,
        FactorKind::SwapAvg,
        FactorKind::SwapMaxDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FactorKind::Window => "WINDOW",
            FactorKind::MaxDiff => "MAX_DIFF",
            FactorKind::SumDiff => "SUM_DIFF",
            FactorKind::IndexDiff => "INDEX_DIFF",
            FactorKind::FirstTok => "FIRST_TOK",
            FactorKind::Const => "CONST",
            FactorKind::SwapAvg => "SWAP_AVG",
            FactorKind::SwapMaxDiff => "SWAP_MAX_DIFF",
        }
    }

    /// Metadata fields read by the factor.
    pub fn required_meta(self) -> &'static [&'static str] {
        match self {
            FactorKind::Window => &["feature_index"],
            FactorKind::MaxDiff | FactorKind::SumDiff => &["segment_b"],
            FactorKind::IndexDiff => &["segment_b", "shared_index_pairs"],
            FactorKind::FirstTok => &["separator_index"],
            FactorKind::Const => &["control_index"],
            FactorKind::SwapAvg | FactorKind::SwapMaxDiff => &["swap_indices_a", "swap_indices_b"],
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "window" | "irreg" | "verb" | "adj" | "adject" => FactorKind::Window,
            "max-diff" => FactorKind::MaxDiff,
            "sum-diff" => FactorKind::SumDiff,
            "index-diff" => FactorKind::IndexDiff,
            "first-tok" => FactorKind::FirstTok,
            "const" => FactorKind::Const,
            "swap-avg" => FactorKind::SwapAvg,
            "swap-max-diff" => FactorKind::SwapMaxDiff,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown factor {s} (expected window, max-diff, sum-diff, index-diff, first-tok, const, swap-avg or swap-max-diff)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorOptions {
    pub half_width: usize,
    /// Let INDEX_DIFF align equal surface forms when an example carries no
    /// shared index pairs.
    pub surface_fallback: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self { half_width: DEFAULT_HALF_WIDTH, surface_fallback: false }
    }
}

/// `-sum(scores[m - half .. m + half])`, clipped to the slice.
pub fn window_value(scores: &[f64], m: usize, half_width: usize) -> f64 {
    let lo = m.saturating_sub(half_width);
    let hi = (m + half_width + 1).min(scores.len());
    -scores.get(lo..hi).map_or(0.0, |w| w.iter().sum())
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn inapplicable(kind: FactorKind, example: &Example, missing: &'static str) -> Error {
    Error::InapplicableFactor { factor: kind.name(), example_id: example.id.clone(), missing }
}

/// Whether INDEX_DIFF on this example would rely on surface matching.
pub fn uses_surface_fallback(kind: FactorKind, example: &Example, options: &FactorOptions) -> bool {
    kind == FactorKind::IndexDiff
        && options.surface_fallback
        && example.meta.shared_index_pairs.is_none()
        && example.segments.len() == 2
}

/// Factor value of `scores`, which cover the flattened sequence of `example`.
pub fn factor_value(kind: FactorKind, example: &Example, scores: &[f64], options: &FactorOptions) -> Result<f64> {
    let layout = example.layout();
    if scores.len() != layout.len() {
        return Err(Error::Validation(format!(
            "example {}: {} scores for {} flattened tokens",
            example.id,
            scores.len(),
            layout.len()
        )));
    }
    let segment = |s: usize| -> &[f64] { &scores[layout.segment_range(s)] };
    let two_segments = || -> Result<(&[f64], &[f64])> {
        if layout.segment_count() != 2 {
            return Err(inapplicable(kind, example, "segment_b"));
        }
        Ok((segment(0), segment(1)))
    };
    let meta = &example.meta;
    match kind {
        FactorKind::Window => {
            let m = meta.feature_index.ok_or_else(|| inapplicable(kind, example, "feature_index"))?;
            Ok(window_value(segment(0), m, options.half_width))
        }
        FactorKind::MaxDiff => {
            let (a, b) = two_segments()?;
            Ok(max_of(a.iter().copied()) - max_of(b.iter().copied()))
        }
        FactorKind::SumDiff => {
            let (a, b) = two_segments()?;
            Ok(a.iter().sum::<f64>() - b.iter().sum::<f64>())
        }
        FactorKind::IndexDiff => {
            let (a, b) = two_segments()?;
            let pairs = match &meta.shared_index_pairs {
                Some(pairs) => pairs.clone(),
                None if options.surface_fallback => greedy_shared_pairs(&example.segments[0], &example.segments[1]),
                None => return Err(inapplicable(kind, example, "shared_index_pairs")),
            };
            if pairs.is_empty() {
                return Err(inapplicable(kind, example, "shared_index_pairs"));
            }
            pairs
                .iter()
                .map(|&(i, j)| match (a.get(i), b.get(j)) {
                    (Some(x), Some(y)) => Ok(x - y),
                    _ => Err(Error::Validation(format!("example {}: shared pair ({i}, {j}) out of range", example.id))),
                })
                .sum()
        }
        FactorKind::FirstTok => {
            let sep = meta.separator_index.ok_or_else(|| inapplicable(kind, example, "separator_index"))?;
            scores
                .get(sep)
                .copied()
                .ok_or_else(|| Error::Validation(format!("example {}: separator_index {sep} out of range", example.id)))
        }
        FactorKind::Const => {
            let c = meta.control_index.ok_or_else(|| inapplicable(kind, example, "control_index"))?;
            lookup(example, segment(0), c).map(|v| -v)
        }
        FactorKind::SwapAvg | FactorKind::SwapMaxDiff => {
            let (a, b) = two_segments()?;
            let ia = meta.swap_indices_a.as_deref().filter(|v| !v.is_empty());
            let ib = meta.swap_indices_b.as_deref().filter(|v| !v.is_empty());
            let ia = ia.ok_or_else(|| inapplicable(kind, example, "swap_indices_a"))?;
            let ib = ib.ok_or_else(|| inapplicable(kind, example, "swap_indices_b"))?;
            let va = ia.iter().map(|&i| lookup(example, a, i)).collect::<Result<Vec<f64>>>()?;
            let vb = ib.iter().map(|&i| lookup(example, b, i)).collect::<Result<Vec<f64>>>()?;
            if kind == FactorKind::SwapAvg {
                let total: f64 = va.iter().chain(&vb).sum();
                Ok(-total / (va.len() + vb.len()) as f64)
            } else {
                Ok(max_of(va.iter().map(|v| v.abs())) - max_of(vb.iter().map(|v| v.abs())))
            }
        }
    }
}

fn lookup(example: &Example, segment: &[f64], i: usize) -> Result<f64> {
    segment
        .get(i)
        .copied()
        .ok_or_else(|| Error::Validation(format!("example {}: metadata index {i} out of range", example.id)))
}

/// Flattened positions a factor reads; everything else is irrelevant to it.
pub fn factor_support(kind: FactorKind, example: &Example, options: &FactorOptions) -> Option<Vec<usize>> {
    let layout = example.layout();
    let seg = |s: usize| -> Range<usize> { layout.segment_range(s) };
    let meta = &example.meta;
    match kind {
        FactorKind::Window => meta.feature_index.map(|m| {
            let r = seg(0);
            let lo = m.saturating_sub(options.half_width);
            let hi = (m + options.half_width + 1).min(r.len());
            (r.start + lo..r.start + hi).collect()
        }),
        FactorKind::Const => meta.control_index.map(|c| alloc::vec![seg(0).start + c]),
        FactorKind::FirstTok => meta.separator_index.map(|s| alloc::vec![s]),
        FactorKind::SwapAvg | FactorKind::SwapMaxDiff => {
            let a = meta.swap_indices_a.as_ref()?;
            let b = meta.swap_indices_b.as_ref()?;
            (layout.segment_count() == 2)
                .then(|| a.iter().map(|i| seg(0).start + i).chain(b.iter().map(|j| seg(1).start + j)).collect())
        }
        FactorKind::IndexDiff => {
            let pairs = meta.shared_index_pairs.as_ref()?;
            (layout.segment_count() == 2).then(|| {
                pairs.iter().flat_map(|&(i, j)| [seg(0).start + i, seg(1).start + j]).collect()
            })
        }
        FactorKind::MaxDiff | FactorKind::SumDiff => {
            (layout.segment_count() == 2).then(|| layout.word_positions())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BaselineKind {
    Acc,
    Conf,
    ConfGt,
    Random,
    Guess,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] =
        [BaselineKind::Acc, BaselineKind::Conf, BaselineKind::ConfGt, BaselineKind::Random, BaselineKind::Guess];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Acc => "ACC",
            BaselineKind::Conf => "CONF",
            BaselineKind::ConfGt => "CONF_GT",
            BaselineKind::Random => "RANDOM",
            BaselineKind::Guess => "GUESS",
        }
    }

    pub fn needs_gold(self) -> bool {
        matches!(self, BaselineKind::Acc | BaselineKind::ConfGt)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "acc" => BaselineKind::Acc,
            "conf" => BaselineKind::Conf,
            "conf-gt" => BaselineKind::ConfGt,
            "random" => BaselineKind::Random,
            "guess" => BaselineKind::Guess,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown baseline {s} (expected acc, conf, conf-gt, random or guess)"
                )))
            }
        })
    }
}

/// A model's prediction on one probe example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub predicted: u8,
    pub predicted_prob: f64,
    pub gold: Option<u8>,
}

impl Prediction {
    /// Probability of the gold label, derived from the binary distribution.
    pub fn gold_prob(&self) -> Option<f64> {
        self.gold.map(|g| if g == self.predicted { self.predicted_prob } else { 1.0 - self.predicted_prob })
    }
}

/// Per-example baseline score; higher means a better model.
pub fn baseline_score<R: Rng + ?Sized>(kind: BaselineKind, prediction: &Prediction, rng: &mut R) -> Result<f64> {
    let gold = || prediction.gold.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs gold labels")));
    match kind {
        BaselineKind::Acc => Ok(if prediction.predicted == gold()? { 1.0 } else { 0.0 }),
        BaselineKind::Conf => Ok(prediction.predicted_prob),
        BaselineKind::ConfGt => {
            gold()?;
            Ok(prediction.gold_prob().unwrap_or_default())
        }
        BaselineKind::Random => Ok(rng.gen::<f64>()),
        BaselineKind::Guess => Err(Error::GuessPerExample),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Meta;
    use crate::util::rng;
    use alloc::string::{String, ToString};
    use alloc::vec;
    use proptest::prelude::*;

    fn example(lens: &[usize], meta: Meta) -> Example {
        Example {
            id: "x".into(),
            segments: lens.iter().map(|&n| (0..n).map(|i| format!("w{i}")).collect()).collect(),
            label: 1,
            meta,
        }
    }

    /// Flattened scores from per-segment scores; structural slots get `fill`.
    fn flatten(segments: &[&[f64]], fill: f64) -> Vec<f64> {
        let mut out = vec![fill];
        for s in segments {
            out.extend_from_slice(s);
            out.push(fill);
        }
        out
    }

    fn pair_example() -> Example {
        example(
            &[2, 2],
            Meta { shared_index_pairs: Some(vec![(1, 0)]), separator_index: Some(3), ..Meta::default() },
        )
    }

    #[test]
    fn window_arithmetic() {
        let phi = [0.1, 0.2, 0.3, 0.2, 0.1, 0.0];
        assert!((window_value(&phi, 2, 2) + 0.9).abs() < 1e-12);
        assert_eq!(window_value(&[0.5, 0.5], 0, 2), -1.0);
        let ex = example(&[6], Meta { feature_index: Some(2), ..Meta::default() });
        let v = factor_value(FactorKind::Window, &ex, &flatten(&[&phi], 7.0), &FactorOptions::default()).unwrap();
        assert!((v + 0.9).abs() < 1e-12);
    }

    #[test]
    fn pair_arithmetic() {
        let ex = pair_example();
        let scores = flatten(&[&[0.1, 0.9], &[0.4, 0.2]], 0.0);
        let opts = FactorOptions::default();
        let close = |k, want: f64| assert!((factor_value(k, &ex, &scores, &opts).unwrap() - want).abs() < 1e-12);
        close(FactorKind::MaxDiff, 0.5);
        close(FactorKind::SumDiff, 0.4);
        close(FactorKind::IndexDiff, 0.5);
        let mut with_sep = scores.clone();
        with_sep[3] = 0.25;
        assert_eq!(factor_value(FactorKind::FirstTok, &ex, &with_sep, &opts).unwrap(), 0.25);
    }

    #[test]
    fn dataset_factor_arithmetic() {
        let opts = FactorOptions::default();
        let ex = example(&[3], Meta { control_index: Some(0), ..Meta::default() });
        assert_eq!(factor_value(FactorKind::Const, &ex, &flatten(&[&[0.7, 0.1, 0.0]], 0.0), &opts).unwrap(), -0.7);
        let ex = example(
            &[3, 3],
            Meta { swap_indices_a: Some(vec![1]), swap_indices_b: Some(vec![2]), ..Meta::default() },
        );
        let scores = flatten(&[&[0.0, 0.4, 0.0], &[0.0, 0.0, 0.6]], 0.0);
        assert!((factor_value(FactorKind::SwapAvg, &ex, &scores, &opts).unwrap() + 0.5).abs() < 1e-12);
        let scores = flatten(&[&[0.0, -0.6, 0.0], &[0.0, 0.0, 0.4]], 0.0);
        assert!((factor_value(FactorKind::SwapMaxDiff, &ex, &scores, &opts).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn missing_metadata_is_an_error() {
        let opts = FactorOptions::default();
        let single = example(&[4], Meta::default());
        let scores = vec![0.0; 6];
        for kind in FactorKind::ALL {
            assert!(matches!(
                factor_value(kind, &single, &scores, &opts),
                Err(Error::InapplicableFactor { .. })
            ), "{kind}");
        }
        let pair = example(&[2, 2], Meta::default());
        let scores = vec![0.1; 7];
        for kind in [FactorKind::IndexDiff, FactorKind::FirstTok, FactorKind::SwapAvg, FactorKind::SwapMaxDiff] {
            assert!(matches!(factor_value(kind, &pair, &scores, &opts), Err(Error::InapplicableFactor { .. })));
        }
        let empty = example(&[2, 2], Meta { swap_indices_a: Some(vec![]), swap_indices_b: Some(vec![0]), ..Meta::default() });
        assert!(factor_value(FactorKind::SwapAvg, &empty, &scores, &opts).is_err());
        assert!(factor_value(FactorKind::Window, &single, &[0.0; 3], &opts).is_err());
    }

    #[test]
    fn surface_fallback_is_opt_in() {
        let mut ex = example(&[3, 2], Meta::default());
        ex.segments = vec![
            ["a", "cat", "slept"].map(String::from).to_vec(),
            ["cat", "ran"].map(String::from).to_vec(),
        ];
        let scores = flatten(&[&[0.0, 0.8, 0.0], &[0.3, 0.0]], 0.0);
        assert!(factor_value(FactorKind::IndexDiff, &ex, &scores, &FactorOptions::default()).is_err());
        let opts = FactorOptions { surface_fallback: true, ..FactorOptions::default() };
        assert!(uses_surface_fallback(FactorKind::IndexDiff, &ex, &opts));
        assert!((factor_value(FactorKind::IndexDiff, &ex, &scores, &opts).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn names_and_aliases() {
        for kind in FactorKind::ALL {
            assert_eq!(kind.name().parse::<FactorKind>().unwrap(), kind);
        }
        for alias in ["irreg", "verb", "adj", "WINDOW"] {
            assert_eq!(alias.parse::<FactorKind>().unwrap(), FactorKind::Window);
        }
        assert_eq!("sum-diff".parse::<FactorKind>().unwrap(), FactorKind::SumDiff);
        assert!("nope".parse::<FactorKind>().is_err());
        for kind in BaselineKind::ALL {
            assert_eq!(kind.name().parse::<BaselineKind>().unwrap(), kind);
        }
    }

    #[test]
    fn baselines() {
        let mut r = rng(1);
        let p = Prediction { predicted: 1, predicted_prob: 0.7, gold: Some(0) };
        assert_eq!(baseline_score(BaselineKind::Acc, &p, &mut r).unwrap(), 0.0);
        assert_eq!(baseline_score(BaselineKind::Conf, &p, &mut r).unwrap(), 0.7);
        assert!((baseline_score(BaselineKind::ConfGt, &p, &mut r).unwrap() - 0.3).abs() < 1e-15);
        let right = Prediction { gold: Some(1), ..p };
        assert_eq!(baseline_score(BaselineKind::Acc, &right, &mut r).unwrap(), 1.0);
        let unlabeled = Prediction { gold: None, ..p };
        assert!(baseline_score(BaselineKind::Acc, &unlabeled, &mut r).is_err());
        assert!(baseline_score(BaselineKind::Conf, &unlabeled, &mut r).is_ok());
        assert_eq!(baseline_score(BaselineKind::Guess, &p, &mut r), Err(Error::GuessPerExample));
        let draws = |seed| {
            let mut r = rng(seed);
            (0..5).map(|_| baseline_score(BaselineKind::Random, &p, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draws(3), draws(3));
        assert!(draws(3).iter().all(|v| (0.0..1.0).contains(v)));
        assert!(BaselineKind::ConfGt.needs_gold() && !BaselineKind::Conf.needs_gold());
        assert_eq!(BaselineKind::Random.to_string(), "RANDOM");
    }

    fn rich_example(len_a: usize, len_b: usize) -> Example {
        example(
            &[len_a, len_b],
            Meta {
                feature_index: Some(len_a / 2),
                shared_index_pairs: Some(vec![(0, 0), (len_a - 1, len_b - 1)]),
                swap_indices_a: Some(vec![1]),
                swap_indices_b: Some(vec![len_b - 2]),
                control_index: Some(0),
                separator_index: Some(len_a + 1),
            },
        )
    }

    proptest! {
        #[test]
        fn factors_scale_linearly(
            len_a in 3usize..9, len_b in 3usize..9, c in 0.01f64..100.0,
            raw in proptest::collection::vec(-1.0f64..1.0, 19),
        ) {
            let ex = rich_example(len_a, len_b);
            let n = ex.layout().len();
            let scores = &raw[..n];
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            let opts = FactorOptions::default();
            for kind in FactorKind::ALL {
                let v = factor_value(kind, &ex, scores, &opts).unwrap();
                let w = factor_value(kind, &ex, &scaled, &opts).unwrap();
                prop_assert!((w - c * v).abs() <= 1e-9 * (1.0 + (c * v).abs()), "{}", kind);
            }
        }

        #[test]
        fn segment_exchange_negates_difference_factors(
            len_a in 3usize..9, len_b in 3usize..9,
            raw in proptest::collection::vec(-1.0f64..1.0, 19),
        ) {
            let ex = rich_example(len_a, len_b);
            let n = ex.layout().len();
            let scores = &raw[..n];
            let a = &scores[1..1 + len_a];
            let b = &scores[2 + len_a..n - 1];
            let mut swapped = ex.clone();
            swapped.segments.swap(0, 1);
            let pairs = ex.meta.shared_index_pairs.clone().unwrap();
            swapped.meta.shared_index_pairs = Some(pairs.iter().map(|&(i, j)| (j, i)).collect());
            swapped.meta.separator_index = Some(len_b + 1);
            let swapped_scores = flatten(&[b, a], 0.0);
            let opts = FactorOptions::default();
            for kind in [FactorKind::MaxDiff, FactorKind::SumDiff, FactorKind::IndexDiff] {
                let v = factor_value(kind, &ex, scores, &opts).unwrap();
                let w = factor_value(kind, &swapped, &swapped_scores, &opts).unwrap();
                prop_assert!((v + w).abs() <= 1e-12, "{}", kind);
            }
        }

        #[test]
        fn local_factors_ignore_other_positions(
            len_a in 3usize..9, len_b in 3usize..9,
            raw in proptest::collection::vec(-1.0f64..1.0, 19),
            noise in proptest::collection::vec(-5.0f64..5.0, 19),
        ) {
            let ex = rich_example(len_a, len_b);
            let n = ex.layout().len();
            let opts = FactorOptions::default();
            for kind in [FactorKind::Window, FactorKind::Const, FactorKind::SwapAvg, FactorKind::SwapMaxDiff, FactorKind::FirstTok, FactorKind::IndexDiff] {
                let support = factor_support(kind, &ex, &opts).unwrap();
                let mut fuzzed = raw[..n].to_vec();
                for (i, v) in fuzzed.iter_mut().enumerate() {
                    if !support.contains(&i) {
                        *v = noise[i];
                    }
                }
                prop_assert_eq!(
                    factor_value(kind, &ex, &raw[..n], &opts).unwrap(),
                    factor_value(kind, &ex, &fuzzed, &opts).unwrap()
                );
            }
        }
    }
}
