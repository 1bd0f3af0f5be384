//! Local linear surrogates fitted on random masks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::game::CoalitionGame;
use super::linalg::NormalEquations;
use crate::error::{Error, Result};
use crate::util::rng;

pub const MIN_LIME_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Kernel width; `None` means `0.75 * sqrt(players)`.
    #[serde(default)]
    pub kernel_width: Option<f64>,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { n_samples: 2000, kernel_width: None, ridge_lambda: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub warning: Option<String>,
}

/// Cosine distance between a binary mask with `kept` ones and the all-ones
/// vector of length `players`.
fn cosine_distance(kept: usize, players: usize) -> f64 {
    if kept == 0 {
        return 1.0;
    }
    1.0 - libm::sqrt(kept as f64 / players as f64)
}

/// Fits a ridge-regularized weighted linear model from mask indicators to
/// coalition values. The first sample is the unperturbed input; each further
/// sample removes a uniformly drawn number (1..=players) of random players.
/// Samples are weighted by `exp(-d^2 / width^2)` with `d` the cosine
/// distance to the unperturbed mask. The intercept is not penalized.
pub fn lime_game<G: CoalitionGame + ?Sized>(game: &G, cfg: &LimeConfig) -> Result<LimeFit> {
    if cfg.n_samples < MIN_LIME_SAMPLES {
        return Err(Error::InvalidArgument(alloc::format!(
            "LIME needs at least {MIN_LIME_SAMPLES} samples, got {}",
            cfg.n_samples
        )));
    }
    let players = game.players();
    if players == 0 {
        return Ok(LimeFit { coefficients: vec![], intercept: game.empty_value(), warning: None });
    }
    let width = cfg.kernel_width.unwrap_or(0.75 * libm::sqrt(players as f64));
    if width.is_nan() || width <= 0.0 {
        return Err(Error::InvalidArgument("kernel width must be positive".into()));
    }
    let mut rng = rng(cfg.seed);
    let mut samples: Vec<(Vec<bool>, f64, f64)> = Vec::with_capacity(cfg.n_samples);
    let mut coalition = vec![true; players];
    for s in 0..cfg.n_samples {
        coalition.iter_mut().for_each(|c| *c = true);
        if s > 0 {
            let removed = rng.gen_range(1..=players);
            for i in sample(&mut rng, players, removed) {
                coalition[i] = false;
            }
        }
        let kept = coalition.iter().filter(|&&c| c).count();
        let d = cosine_distance(kept, players);
        let weight = libm::exp(-(d * d) / (width * width));
        samples.push((coalition.clone(), game.value(&coalition), weight));
    }

    let first = samples[0].1;
    if samples.iter().all(|(_, y, _)| (y - first).abs() <= f64::EPSILON * first.abs().max(1.0)) {
        return Ok(LimeFit {
            coefficients: vec![0.0; players],
            intercept: first,
            warning: Some("constant coalition values; all LIME scores set to zero".into()),
        });
    }

    // columns: players..., intercept
    let mut normal = NormalEquations::new(players + 1);
    let mut row = vec![0.0; players + 1];
    for (mask, y, w) in &samples {
        for (r, &m) in row.iter_mut().zip(mask) {
            *r = if m { 1.0 } else { 0.0 };
        }
        row[players] = 1.0;
        normal.add(&row, *y, *w);
    }
    let solution = normal.solve(cfg.ridge_lambda, &[players])?;
    Ok(LimeFit {
        coefficients: solution[..players].to_vec(),
        intercept: solution[players],
        warning: None,
    })
}
