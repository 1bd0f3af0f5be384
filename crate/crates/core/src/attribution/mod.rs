//! Per-token attributions for a model's own prediction.
//!
//! Scores always span the full flattened sequence `[CLS] a [SEP] (b [SEP])`.
//! Masking methods never perturb structural tokens and score them 0.

mod game;
mod ig;
mod lime;
mod linalg;
mod shapley;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use game::{AdditiveGame, CoalitionGame, FnGame, ModelGame};
pub use ig::{integrated_gradients, IgConfig, MIN_IG_STEPS};
pub use lime::{lime_game, LimeConfig, LimeFit, MIN_LIME_SAMPLES};
pub use shapley::{
    exact_shapley_game, kernel_shap_game, shapley_kernel, KernelShapConfig, ShapSampling, EXACT_SHAPLEY_LIMIT,
    FULL_ENUM_LIMIT,
};

use crate::corpus::{Example, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{check_input, Model};
use crate::util::{derive_seed, digest_strs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LIME")]
    Lime,
    #[serde(rename = "KSHAP")]
    KernelShap,
    #[serde(rename = "EXACT_SHAP")]
    ExactShap,
    #[serde(rename = "IG")]
    Ig,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lime, Method::KernelShap, Method::ExactShap, Method::Ig];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lime => "LIME",
            Method::KernelShap => "KSHAP",
            Method::ExactShap => "EXACT_SHAP",
            Method::Ig => "IG",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lime" => Ok(Method::Lime),
            "kshap" | "shap" | "kernel_shap" => Ok(Method::KernelShap),
            "exact_shap" | "exact" => Ok(Method::ExactShap),
            "ig" | "integrated_gradients" => Ok(Method::Ig),
            _ => Err(Error::UnknownMethod(format!("{s} (expected one of lime, kshap, exact_shap, ig)"))),
        }
    }
}

/// A method together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum MethodConfig {
    #[serde(rename = "LIME")]
    Lime(LimeConfig),
    #[serde(rename = "KSHAP")]
    KernelShap(KernelShapConfig),
    #[serde(rename = "EXACT_SHAP")]
    ExactShap,
    #[serde(rename = "IG")]
    Ig(IgConfig),
}

impl MethodConfig {
    /// Default parameters for `method` with the given root seed.
    pub fn default_for(method: Method, seed: u64) -> Self {
        match method {
            Method::Lime => MethodConfig::Lime(LimeConfig { seed, ..LimeConfig::default() }),
            Method::KernelShap => MethodConfig::KernelShap(KernelShapConfig { seed, ..KernelShapConfig::default() }),
            Method::ExactShap => MethodConfig::ExactShap,
            Method::Ig => MethodConfig::Ig(IgConfig::default()),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Lime(_) => Method::Lime,
            MethodConfig::KernelShap(_) => Method::KernelShap,
            MethodConfig::ExactShap => Method::ExactShap,
            MethodConfig::Ig(_) => Method::Ig,
        }
    }

    /// Short stable hash of the method and every parameter.
    pub fn digest(&self) -> String {
        let text = format!("{self:?}");
        digest_strs([text.as_str()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub example_id: String,
    pub model: String,
    pub method: Method,
    pub scores: Vec<f64>,
    pub explained_class: u8,
    pub predicted_prob: f64,
    pub config_digest: String,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl Attribution {
    pub fn validate(&self) -> Result<()> {
        if self.explained_class > 1 {
            return Err(Error::Validation(format!("{}: explained class {}", self.example_id, self.explained_class)));
        }
        if let Some(i) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("{}: non-finite score at {i}", self.example_id)));
        }
        if !(0.0..=1.0).contains(&self.predicted_prob) {
            return Err(Error::Validation(format!("{}: probability {}", self.example_id, self.predicted_prob)));
        }
        Ok(())
    }
}

/// Index of the larger probability; ties go to class 0.
pub fn predicted_class(proba: [f64; 2]) -> usize {
    usize::from(proba[1] > proba[0])
}

/// Explains `model`'s prediction on `example`. Randomized methods draw from
/// a seed derived from the configured seed and the example id, so results do
/// not depend on the order in which examples are processed.
pub fn explain(
    model: &Model,
    model_label: &str,
    vocab: &Vocabulary,
    example: &Example,
    config: &MethodConfig,
) -> Result<Attribution> {
    check_input(example)?;
    let ids = example.encode(vocab);
    let proba = model.predict_proba_ids(&ids);
    let class = predicted_class(proba);
    let game = ModelGame::new(model, vocab, example, class);
    let mut warnings = Vec::new();
    let scatter = |player_scores: &[f64]| {
        let mut scores = vec![0.0; ids.len()];
        for (&pos, &s) in game.positions().iter().zip(player_scores) {
            scores[pos] = s;
        }
        scores
    };
    let scores = match config {
        MethodConfig::Lime(cfg) => {
            let cfg = LimeConfig { seed: derive_seed(cfg.seed, &example.id), ..cfg.clone() };
            let fit = lime_game(&game, &cfg)?;
            warnings.extend(fit.warning.map(|w| format!("{}: {w}", example.id)));
            scatter(&fit.coefficients)
        }
        MethodConfig::KernelShap(cfg) => {
            let cfg = KernelShapConfig { seed: derive_seed(cfg.seed, &example.id), ..cfg.clone() };
            scatter(&kernel_shap_game(&game, &cfg)?)
        }
        MethodConfig::ExactShap => scatter(&exact_shapley_game(&game)?),
        MethodConfig::Ig(cfg) => integrated_gradients(model, &ids, class, cfg)?,
    };
    let attribution = Attribution {
        example_id: example.id.clone(),
        model: model_label.into(),
        method: config.method(),
        scores,
        explained_class: class as u8,
        predicted_prob: proba[class],
        config_digest: config.digest(),
        warnings,
    };
    attribution.validate()?;
    Ok(attribution)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Normalization {
    #[default]
    Raw,
    L1,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::Raw => "RAW",
            Normalization::L1 => "L1",
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Normalization::Raw),
            "l1" => Ok(Normalization::L1),
            _ => Err(Error::InvalidArgument(format!("unknown normalization {s} (expected raw or l1)"))),
        }
    }
}

pub fn normalize(attribution: &Attribution, mode: Normalization) -> Attribution {
    let mut out = attribution.clone();
    if mode == Normalization::L1 {
        let total: f64 = out.scores.iter().map(|s| s.abs()).sum();
        if total > 0.0 {
            out.scores.iter_mut().for_each(|s| *s /= total);
        } else {
            out.warnings.push(format!("{}: all-zero scores left unnormalized", out.example_id));
        }
    }
    out
}
