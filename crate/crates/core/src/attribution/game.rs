use alloc::vec::Vec;

use crate::corpus::{Example, TokenId, Vocabulary, MASK_ID};
use crate::model::Model;

/// A cooperative game over the attributable tokens of one input.
pub trait CoalitionGame {
    fn players(&self) -> usize;

    /// Value of the coalition whose members are flagged `true`.
    fn value(&self, coalition: &[bool]) -> f64;

    fn full_value(&self) -> f64 {
        self.value(&alloc::vec![true; self.players()])
    }

    fn empty_value(&self) -> f64 {
        self.value(&alloc::vec![false; self.players()])
    }
}

/// Predicted-class probability of a model when the word tokens outside the
/// coalition are replaced by the mask token. CLS/SEP are never players.
#[derive(Debug, Clone)]
pub struct ModelGame<'a> {
    model: &'a Model,
    ids: Vec<TokenId>,
    positions: Vec<usize>,
    class: usize,
}

impl<'a> ModelGame<'a> {
    pub fn new(model: &'a Model, vocab: &Vocabulary, example: &Example, class: usize) -> Self {
        Self {
            model,
            ids: example.encode(vocab),
            positions: example.layout().word_positions(),
            class,
        }
    }

    /// Flattened position of each player.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    /// Token ids with every non-member player masked.
    pub fn masked_ids(&self, coalition: &[bool]) -> Vec<TokenId> {
        let mut ids = self.ids.clone();
        for (&pos, &keep) in self.positions.iter().zip(coalition) {
            if !keep {
                ids[pos] = MASK_ID;
            }
        }
        ids
    }
}

impl CoalitionGame for ModelGame<'_> {
    fn players(&self) -> usize {
        self.positions.len()
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        self.model.predict_proba_ids(&self.masked_ids(coalition))[self.class]
    }
}

/// `v(S) = base + sum of weights in S`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveGame {
    pub base: f64,
    pub weights: Vec<f64>,
}

impl CoalitionGame for AdditiveGame {
    fn players(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        self.base
            + self.weights.iter().zip(coalition).filter(|(_, &keep)| keep).map(|(w, _)| w).sum::<f64>()
    }
}

/// Adapts a closure over coalitions into a game.
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F: Fn(&[bool]) -> f64> FnGame<F> {
    pub fn new(players: usize, f: F) -> Self {
        Self { players, f }
    }
}

impl<F: Fn(&[bool]) -> f64> CoalitionGame for FnGame<F> {
    fn players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        (self.f)(coalition)
    }
}

/// Coalition encoded by the low `players` bits of `mask`.
pub(crate) fn coalition_from_mask(mask: u64, players: usize, out: &mut [bool]) {
    for (i, slot) in out.iter_mut().enumerate().take(players) {
        *slot = mask >> i & 1 == 1;
    }
}
