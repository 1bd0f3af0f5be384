//! Integrated gradients from an all-mask baseline.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::model::{dot, Model};

pub const MIN_IG_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    pub steps: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self { steps: 256 }
    }
}

/// Per-position integrated gradients of the `class` logit along the straight
/// path from the all-mask input to `ids`, using the midpoint rule.
/// Structural positions are integrated like any other token.
pub fn integrated_gradients(model: &Model, ids: &[TokenId], class: usize, cfg: &IgConfig) -> Result<Vec<f64>> {
    if cfg.steps < MIN_IG_STEPS {
        return Err(Error::InvalidArgument(alloc::format!(
            "integrated gradients needs at least {MIN_IG_STEPS} steps, got {}",
            cfg.steps
        )));
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput("integrated gradients on an empty input".into()));
    }
    let d = model.embed_dim();
    let input = model.embed(ids);
    let baseline: Vec<f64> = model.mask_embedding().iter().copied().cycle().take(input.len()).collect();
    let delta: Vec<f64> = input.iter().zip(&baseline).map(|(x, b)| x - b).collect();
    let mut summed = vec![0.0; input.len()];
    let mut point = vec![0.0; input.len()];
    for k in 0..cfg.steps {
        let alpha = (k as f64 + 0.5) / cfg.steps as f64;
        for ((p, b), dx) in point.iter_mut().zip(&baseline).zip(&delta) {
            *p = b + alpha * dx;
        }
        let (_, grads) = model.input_gradients(&point, class);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step: k });
        }
        for (s, g) in summed.iter_mut().zip(&grads) {
            *s += g;
        }
    }
    let scale = 1.0 / cfg.steps as f64;
    Ok(delta
        .chunks(d)
        .zip(summed.chunks(d))
        .map(|(dx, g)| dot(dx, g) * scale)
        .collect())
}
