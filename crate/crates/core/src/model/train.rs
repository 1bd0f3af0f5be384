use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, softmax2, Model};
use crate::corpus::{Dataset, TokenId, CLS_ID, MASK_ID, SEP_ID};
use crate::error::{Error, Result};
use crate::util::rng_stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    #[serde(default)]
    pub momentum: f64,
    /// Probability of replacing each word token with the mask token when it
    /// is fed to the model during training.
    #[serde(default)]
    pub word_dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.5, epochs: 20, batch_size: 16, l2: 1e-4, momentum: 0.9, word_dropout: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
    /// In-domain accuracy of the returned model on the training set.
    pub train_accuracy: f64,
}

/// Softplus, `ln(1 + e^x)`, without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Cross-entropy of `label` and its gradient with respect to the logits.
fn cross_entropy(logits: [f64; 2], label: usize) -> (f64, [f64; 2]) {
    let other = 1 - label;
    let loss = softplus(logits[other] - logits[label]);
    let p = softmax2(logits);
    let mut grad = [0.0; 2];
    grad[label] = -p[other];
    grad[other] = p[other];
    (loss, grad)
}

/// Mini-batch gradient descent (with optional heavy-ball momentum) on the
/// mean cross-entropy plus `l2/2 * |params|^2`. Returns the trained copy of
/// `model`. Aborts with [`Error::Divergence`] on the first non-finite loss.
pub fn train(
    model: &Model,
    vocab: &crate::corpus::Vocabulary,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput(alloc::format!("training set {} is empty", dataset.name)));
    }
    if !(0.0..1.0).contains(&cfg.word_dropout) {
        return Err(Error::InvalidArgument("word_dropout must lie in [0, 1)".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut encoded: Vec<(Vec<TokenId>, usize)> = Vec::with_capacity(dataset.len());
    for example in &dataset.examples {
        check_input(example)?;
        if example.label > 1 {
            return Err(Error::Validation(alloc::format!("example {} has a non-binary label", example.id)));
        }
        encoded.push((example.encode(vocab), example.label as usize));
    }

    let mut model = model.clone();
    let n_params = model.params().len();
    let dim = model.embed_dim();
    let mut velocity = vec![0.0; n_params];
    let mut grads = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    let mut dropout_rng = rng_stream(cfg.seed, u64::MAX);
    let mut dropped: Vec<TokenId> = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_stream(cfg.seed, epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (ids, label) = &encoded[i];
                let ids = if cfg.word_dropout > 0.0 {
                    dropped.clear();
                    dropped.extend(ids.iter().map(|&id| {
                        let structural = id == CLS_ID || id == SEP_ID;
                        if !structural && dropout_rng.gen_bool(cfg.word_dropout) {
                            MASK_ID
                        } else {
                            id
                        }
                    }));
                    &dropped
                } else {
                    ids
                };
                let tape = model.forward(&model.embed(ids));
                let (loss, dlogits) = cross_entropy(tape.logits, *label);
                batch_loss += loss;
                let mut input_grads = vec![0.0; ids.len() * dim];
                model.backward(&tape, dlogits, &mut input_grads, Some((&mut grads, ids.as_slice())));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: batch_loss });
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            let params = model.params_mut();
            for k in 0..n_params {
                let g = grads[k] * scale + cfg.l2 * params[k];
                velocity[k] = cfg.momentum * velocity[k] + g;
                params[k] -= cfg.lr * velocity[k];
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch, step, loss: f64::NAN });
            }
            step += 1;
        }
        epoch_losses.push(epoch_loss / encoded.len() as f64);
    }

    let correct = encoded
        .iter()
        .filter(|(ids, label)| {
            let p = model.predict_proba_ids(ids);
            usize::from(p[1] > p[0]) == *label
        })
        .count();
    let train_accuracy = correct as f64 / encoded.len() as f64;
    Ok((model, TrainReport { epoch_losses, train_accuracy }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Example, Meta, Provenance, Split, Vocabulary};
    use crate::model::{Architecture, ModelSpec};
    use alloc::string::ToString;

    /// Label 1 iff the sentence contains "cat"; other words are shared.
    fn toy_dataset(vocab: &Vocabulary) -> Dataset {
        let fillers = ["dog", "horse", "bird", "river", "city", "house"];
        let examples = (0..60)
            .map(|i| {
                let label = (i % 2) as u8;
                let mut words: Vec<_> = (0..4).map(|k| fillers[(i + k) % fillers.len()].to_string()).collect();
                if label == 1 {
                    words[i % 4] = "cat".to_string();
                }
                Example { id: alloc::format!("toy-{i}"), segments: vec![words], label, meta: Meta::default() }
            })
            .collect();
        Dataset {
            name: "toy".into(),
            split: Split::Train,
            examples,
            vocabulary: vocab.clone(),
            provenance: Provenance::default(),
        }
    }

    fn spec(vocab: &Vocabulary, architecture: Architecture) -> ModelSpec {
        let hidden_dims = if architecture == Architecture::MeanEmbedLinear { vec![] } else { vec![8] };
        ModelSpec { architecture, embed_dim: 8, hidden_dims, vocab_size: vocab.len(), seed: 1 }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let vocab = Vocabulary::standard();
        let data = toy_dataset(&vocab);
        for arch in [Architecture::MeanEmbedLinear, Architecture::MeanEmbedMlp, Architecture::AttnPoolMlp] {
            let model = Model::init(spec(&vocab, arch)).unwrap();
            let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
            let (_, report) = train(&model, &vocab, &data, &cfg).unwrap();
            assert!(report.train_accuracy >= 0.99, "{arch:?}: {}", report.train_accuracy);
            assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let vocab = Vocabulary::standard();
        let data = toy_dataset(&vocab);
        let model = Model::init(spec(&vocab, Architecture::MeanEmbedMlp)).unwrap();
        let cfg = TrainConfig { lr: 0.0, epochs: 2, ..TrainConfig::default() };
        let (trained, _) = train(&model, &vocab, &data, &cfg).unwrap();
        assert_eq!(trained.params(), model.params());
    }

    #[test]
    fn training_is_deterministic() {
        let vocab = Vocabulary::standard();
        let data = toy_dataset(&vocab);
        let model = Model::init(spec(&vocab, Architecture::AttnPoolMlp)).unwrap();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let (a, _) = train(&model, &vocab, &data, &cfg).unwrap();
        let (b, _) = train(&model, &vocab, &data, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn divergence_names_the_step() {
        let vocab = Vocabulary::standard();
        let data = toy_dataset(&vocab);
        let model = Model::init(spec(&vocab, Architecture::MeanEmbedLinear)).unwrap();
        let cfg = TrainConfig { lr: 1e308, momentum: 0.0, epochs: 3, ..TrainConfig::default() };
        match train(&model, &vocab, &data, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step < 10),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let vocab = Vocabulary::standard();
        let mut data = toy_dataset(&vocab);
        data.examples.clear();
        let model = Model::init(spec(&vocab, Architecture::MeanEmbedLinear)).unwrap();
        assert!(matches!(train(&model, &vocab, &data, &TrainConfig::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn cross_entropy_gradient_matches_difference() {
        let logits = [0.3, -1.2];
        let (_, g) = cross_entropy(logits, 1);
        let h = 1e-6;
        let fd = (cross_entropy([0.3 + h, -1.2], 1).0 - cross_entropy([0.3 - h, -1.2], 1).0) / (2.0 * h);
        assert!((fd - g[0]).abs() < 1e-8);
    }
}
