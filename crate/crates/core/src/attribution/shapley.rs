//! Shapley values: exact enumeration and Kernel SHAP.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::game::{coalition_from_mask, CoalitionGame};
use super::linalg::NormalEquations;
use crate::error::{Error, Result};
use crate::util::rng;

pub const EXACT_SHAPLEY_LIMIT: usize = 14;
pub const FULL_ENUM_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapSampling {
    /// Every proper nonempty coalition with its exact kernel weight.
    FullEnum,
    /// This many coalitions drawn by kernel weight, each paired with its
    /// complement.
    Samples(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelShapConfig {
    pub sampling: ShapSampling,
    /// Ridge penalty on the reduced system; 0 reproduces exact Shapley values
    /// under full enumeration.
    #[serde(default)]
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        Self { sampling: ShapSampling::Samples(2048), ridge_lambda: 0.0, seed: 0 }
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut out = vec![1.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] * k as f64;
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `size` among `players`.
pub fn shapley_kernel(players: usize, size: usize) -> f64 {
    (players - 1) as f64 / (binomial(players, size) * size as f64 * (players - size) as f64)
}

/// Exact Shapley values by enumerating all `2^n` coalitions.
pub fn exact_shapley_game<G: CoalitionGame + ?Sized>(game: &G) -> Result<Vec<f64>> {
    let n = game.players();
    if n > EXACT_SHAPLEY_LIMIT {
        return Err(Error::TooManyPlayers { method: "exact Shapley", players: n, limit: EXACT_SHAPLEY_LIMIT });
    }
    let count = 1u64 << n;
    let mut coalition = vec![false; n];
    let values: Vec<f64> = (0..count)
        .map(|mask| {
            coalition_from_mask(mask, n, &mut coalition);
            game.value(&coalition)
        })
        .collect();
    let fact = factorials(n);
    let weights: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
    let mut phi = vec![0.0; n];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        *slot = (0..count)
            .filter(|mask| mask & bit == 0)
            .map(|mask| {
                let size = mask.count_ones() as usize;
                weights[size] * (values[(mask | bit) as usize] - values[mask as usize])
            })
            .sum();
    }
    Ok(phi)
}

/// Kernel SHAP: Shapley-kernel weighted least squares subject to
/// `sum(phi) = v(N) - v(empty)`. The constraint is enforced exactly by
/// eliminating the last player.
pub fn kernel_shap_game<G: CoalitionGame + ?Sized>(game: &G, cfg: &KernelShapConfig) -> Result<Vec<f64>> {
    let n = game.players();
    let v_empty = game.empty_value();
    let v_full = game.full_value();
    let total = v_full - v_empty;
    match n {
        0 => return Ok(vec![]),
        1 => return Ok(vec![total]),
        _ => {}
    }
    let mut normal = NormalEquations::new(n - 1);
    let mut row = vec![0.0; n - 1];
    let mut coalition = vec![false; n];
    let mut add = |coalition: &[bool], weight: f64, normal: &mut NormalEquations| {
        let last = if coalition[n - 1] { 1.0 } else { 0.0 };
        for (r, &c) in row.iter_mut().zip(coalition) {
            *r = if c { 1.0 } else { 0.0 } - last;
        }
        let target = game.value(coalition) - v_empty - last * total;
        normal.add(&row, target, weight);
    };
    match cfg.sampling {
        ShapSampling::FullEnum => {
            if n > FULL_ENUM_LIMIT {
                return Err(Error::TooManyPlayers { method: "Kernel SHAP enumeration", players: n, limit: FULL_ENUM_LIMIT });
            }
            let kernel: Vec<f64> = (0..=n).map(|s| if s == 0 || s == n { 0.0 } else { shapley_kernel(n, s) }).collect();
            for mask in 1..(1u64 << n) - 1 {
                coalition_from_mask(mask, n, &mut coalition);
                add(&coalition, kernel[mask.count_ones() as usize], &mut normal);
            }
        }
        ShapSampling::Samples(count) => {
            if count == 0 {
                return Err(Error::InvalidArgument("Kernel SHAP needs at least one sample".into()));
            }
            // total kernel mass at size s is (n-1) / (s (n-s))
            let mass: Vec<f64> = (1..n).map(|s| 1.0 / (s as f64 * (n - s) as f64)).collect();
            let sum: f64 = mass.iter().sum();
            let mut rng = rng(cfg.seed);
            for _ in 0..count {
                let mut u = rng.gen::<f64>() * sum;
                let mut size = n - 1;
                for (k, m) in mass.iter().enumerate() {
                    if u < *m {
                        size = k + 1;
                        break;
                    }
                    u -= m;
                }
                coalition.iter_mut().for_each(|c| *c = false);
                for i in sample(&mut rng, n, size) {
                    coalition[i] = true;
                }
                add(&coalition, 1.0, &mut normal);
                coalition.iter_mut().for_each(|c| *c = !*c);
                add(&coalition, 1.0, &mut normal);
            }
        }
    }
    let mut phi = normal.solve(cfg.ridge_lambda, &[])?;
    let rest: f64 = phi.iter().sum();
    phi.push(total - rest);
    Ok(phi)
}
