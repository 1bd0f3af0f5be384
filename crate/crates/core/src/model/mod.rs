//! Small differentiable text classifiers over flattened token sequences.
//!
//! All architectures pool token vectors into one vector, optionally pass it
//! through tanh hidden layers, and emit two logits. Gradients are computed
//! analytically, both with respect to the parameters (training) and with
//! respect to each input token vector (integrated gradients).

mod suite;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Example, TokenId, Vocabulary, MASK_ID};
use crate::error::{Error, Result};
use crate::util::rng;

pub use suite::{
    accuracy, build_suite, default_recipes, train_recipe, ModelSuite, Recipe, SuiteMember, TaskData,
};
pub use train::{train, TrainConfig, TrainReport};

/// Position embeddings cover this many positions; later positions share the
/// last row.
pub const MAX_POSITIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Architecture {
    /// Mean of token embeddings, then a linear layer.
    MeanEmbedLinear,
    /// Mean of token embeddings, then a tanh MLP.
    MeanEmbedMlp,
    /// Learned-query attention pooling over token + position embeddings,
    /// then a tanh MLP.
    AttnPoolMlp,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::MeanEmbedLinear => "MEAN_EMBED_LINEAR",
            Architecture::MeanEmbedMlp => "MEAN_EMBED_MLP",
            Architecture::AttnPoolMlp => "ATTN_POOL_MLP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub embed_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub vocab_size: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSpec(msg.into()));
        if self.embed_dim < 2 {
            return fail("embed_dim must be at least 2");
        }
        if self.vocab_size < 3 {
            return fail("vocab_size must cover the reserved tokens");
        }
        if self.hidden_dims.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        match (self.architecture, self.hidden_dims.is_empty()) {
            (Architecture::MeanEmbedLinear, false) => fail("MEAN_EMBED_LINEAR takes no hidden layers"),
            (Architecture::MeanEmbedMlp | Architecture::AttnPoolMlp, true) => {
                fail("MLP architectures need at least one hidden layer")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ParamLayout {
    dim: usize,
    positions: Option<usize>,
    query: Option<usize>,
    hidden: Vec<Dense>,
    output: Dense,
    total: usize,
}

impl ParamLayout {
    fn new(spec: &ModelSpec) -> Self {
        let dim = spec.embed_dim;
        let mut cursor = spec.vocab_size * dim;
        let attn = spec.architecture == Architecture::AttnPoolMlp;
        let positions = attn.then(|| {
            let at = cursor;
            cursor += MAX_POSITIONS * dim;
            at
        });
        let query = attn.then(|| {
            let at = cursor;
            cursor += dim;
            at
        });
        let mut dense = |inputs: usize, outputs: usize| {
            let layer = Dense { inputs, outputs, weight: cursor, bias: cursor + inputs * outputs };
            cursor += inputs * outputs + outputs;
            layer
        };
        let mut width = dim;
        let hidden = spec
            .hidden_dims
            .iter()
            .map(|&h| {
                let layer = dense(width, h);
                width = h;
                layer
            })
            .collect();
        let output = dense(width, 2);
        Self { dim, positions, query, hidden, output, total: cursor }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    len: usize,
    /// Token vectors after adding position embeddings, `len x dim`.
    vectors: Vec<f64>,
    /// Attention weights (attention pooling only).
    attention: Vec<f64>,
    /// Pooled vector followed by each hidden activation.
    activations: Vec<Vec<f64>>,
    pub logits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParts", into = "ModelParts")]
pub struct Model {
    spec: ModelSpec,
    params: Vec<f64>,
    layout: ParamLayout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParts {
    pub spec: ModelSpec,
    pub params: Vec<f64>,
}

impl TryFrom<ModelParts> for Model {
    type Error = Error;

    fn try_from(parts: ModelParts) -> Result<Self> {
        Model::from_params(parts.spec, parts.params)
    }
}

impl From<Model> for ModelParts {
    fn from(model: Model) -> Self {
        ModelParts { spec: model.spec, params: model.params }
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Two-class softmax written as complementary sigmoids, so that swapping the
/// logits swaps the probabilities exactly.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    [sigmoid(logits[0] - logits[1]), sigmoid(logits[1] - logits[0])]
}

impl Model {
    /// Deterministic initialization from `spec.seed`: weights uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new(&spec);
        let mut params = vec![0.0; layout.total];
        let mut rng = rng(spec.seed);
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let scale = 1.0 / libm::sqrt(fan_in as f64);
            for p in slice {
                *p = rng.gen_range(-scale..scale);
            }
        };
        let dim = layout.dim;
        fill(&mut params[..spec.vocab_size * dim], dim);
        if let Some(at) = layout.positions {
            fill(&mut params[at..at + MAX_POSITIONS * dim], dim);
        }
        if let Some(at) = layout.query {
            fill(&mut params[at..at + dim], dim);
        }
        for layer in layout.hidden.iter().chain(core::iter::once(&layout.output)) {
            fill(&mut params[layer.weight..layer.bias], layer.inputs);
        }
        Ok(Self { spec, params, layout })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new(&spec);
        if params.len() != layout.total {
            return Err(Error::InvalidSpec(alloc::format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSpec("parameters must be finite".into()));
        }
        Ok(Self { spec, params, layout })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn embed_dim(&self) -> usize {
        self.layout.dim
    }

    pub fn embedding(&self, id: TokenId) -> &[f64] {
        let id = self.clamp_id(id) as usize;
        let d = self.layout.dim;
        &self.params[id * d..(id + 1) * d]
    }

    pub fn mask_embedding(&self) -> &[f64] {
        self.embedding(MASK_ID)
    }

    /// Final-layer weight row for `class`.
    pub fn output_row(&self, class: usize) -> &[f64] {
        let out = self.layout.output;
        &self.params[out.weight + class * out.inputs..out.weight + (class + 1) * out.inputs]
    }

    /// Negates the final layer (weights and bias), which swaps the two
    /// predicted probabilities.
    pub fn flip_output(&mut self) {
        let out = self.layout.output;
        for p in &mut self.params[out.weight..out.bias + out.outputs] {
            *p = -*p;
        }
    }

    fn clamp_id(&self, id: TokenId) -> TokenId {
        if (id as usize) < self.spec.vocab_size {
            id
        } else {
            MASK_ID
        }
    }

    /// Token embedding vectors for `ids`, flattened `len x dim`.
    pub fn embed(&self, ids: &[TokenId]) -> Vec<f64> {
        let mut out = Vec::with_capacity(ids.len() * self.layout.dim);
        for &id in ids {
            out.extend_from_slice(self.embedding(id));
        }
        out
    }

    fn position(&self, t: usize) -> Option<&[f64]> {
        let d = self.layout.dim;
        self.layout.positions.map(|at| {
            let row = t.min(MAX_POSITIONS - 1);
            &self.params[at + row * d..at + (row + 1) * d]
        })
    }

    /// Forward pass from token vectors (`len x dim`), recording a tape.
    pub fn forward(&self, inputs: &[f64]) -> Tape {
        let d = self.layout.dim;
        let len = inputs.len() / d;
        debug_assert!(len > 0 && inputs.len() == len * d);
        let mut vectors = inputs.to_vec();
        if self.layout.positions.is_some() {
            for t in 0..len {
                let pos = self.position(t).expect("positions present");
                for (v, p) in vectors[t * d..(t + 1) * d].iter_mut().zip(pos) {
                    *v += p;
                }
            }
        }
        let mut pooled = vec![0.0; d];
        let mut attention = Vec::new();
        match self.layout.query {
            None => {
                for t in 0..len {
                    for (acc, v) in pooled.iter_mut().zip(&vectors[t * d..(t + 1) * d]) {
                        *acc += v;
                    }
                }
                let inv = 1.0 / len as f64;
                pooled.iter_mut().for_each(|p| *p *= inv);
            }
            Some(at) => {
                let query = &self.params[at..at + d];
                let scale = 1.0 / libm::sqrt(d as f64);
                let scores: Vec<f64> = (0..len)
                    .map(|t| dot(query, &vectors[t * d..(t + 1) * d]) * scale)
                    .collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                attention = scores.iter().map(|s| libm::exp(s - max)).collect();
                let total: f64 = attention.iter().sum();
                attention.iter_mut().for_each(|a| *a /= total);
                for t in 0..len {
                    for (acc, v) in pooled.iter_mut().zip(&vectors[t * d..(t + 1) * d]) {
                        *acc += attention[t] * v;
                    }
                }
            }
        }
        let mut activations = Vec::with_capacity(self.layout.hidden.len() + 1);
        activations.push(pooled);
        for layer in &self.layout.hidden {
            let input = activations.last().expect("pooled vector present");
            let mut out = self.dense(layer, input);
            out.iter_mut().for_each(|z| *z = libm::tanh(*z));
            activations.push(out);
        }
        let last = activations.last().expect("at least the pooled vector");
        let out = self.dense(&self.layout.output, last);
        Tape { len, vectors, attention, activations, logits: [out[0], out[1]] }
    }

    fn dense(&self, layer: &Dense, input: &[f64]) -> Vec<f64> {
        let w = &self.params[layer.weight..layer.bias];
        let b = &self.params[layer.bias..layer.bias + layer.outputs];
        (0..layer.outputs)
            .map(|o| b[o] + dot(&w[o * layer.inputs..(o + 1) * layer.inputs], input))
            .collect()
    }

    /// Backpropagates `dlogits` through `tape`. Writes the gradient with
    /// respect to each input token vector into `input_grads` (`len x dim`)
    /// and, when given, accumulates parameter gradients into `param_grads`.
    /// `ids` is needed only for the embedding-table gradient.
    pub fn backward(
        &self,
        tape: &Tape,
        dlogits: [f64; 2],
        input_grads: &mut [f64],
        mut param_grads: Option<(&mut [f64], &[TokenId])>,
    ) {
        let d = self.layout.dim;
        let len = tape.len;
        let layers = &self.layout.hidden;

        // output layer
        let out = self.layout.output;
        let last = tape.activations.last().expect("activations recorded");
        let mut grad = vec![0.0; out.inputs];
        for (c, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.params[out.weight + c * out.inputs..out.weight + (c + 1) * out.inputs];
            for (acc, w) in grad.iter_mut().zip(row) {
                *acc += g * w;
            }
            if let Some((pg, _)) = param_grads.as_mut() {
                let at = out.weight + c * out.inputs;
                for (k, z) in last.iter().enumerate() {
                    pg[at + k] += g * z;
                }
                pg[out.bias + c] += g;
            }
        }

        // hidden layers, last to first
        for (l, layer) in layers.iter().enumerate().rev() {
            let z = &tape.activations[l + 1];
            let below = &tape.activations[l];
            let delta: Vec<f64> = grad.iter().zip(z).map(|(g, z)| g * (1.0 - z * z)).collect();
            let mut next = vec![0.0; layer.inputs];
            for (o, &dz) in delta.iter().enumerate() {
                let at = layer.weight + o * layer.inputs;
                let row = &self.params[at..at + layer.inputs];
                for (acc, w) in next.iter_mut().zip(row) {
                    *acc += dz * w;
                }
                if let Some((pg, _)) = param_grads.as_mut() {
                    for (k, x) in below.iter().enumerate() {
                        pg[at + k] += dz * x;
                    }
                    pg[layer.bias + o] += dz;
                }
            }
            grad = next;
        }

        // pooling
        let dpooled = grad;
        match self.layout.query {
            None => {
                let inv = 1.0 / len as f64;
                for t in 0..len {
                    for (g, dp) in input_grads[t * d..(t + 1) * d].iter_mut().zip(&dpooled) {
                        *g = dp * inv;
                    }
                }
            }
            Some(at) => {
                let scale = 1.0 / libm::sqrt(d as f64);
                let alpha = &tape.attention;
                let proj: Vec<f64> =
                    (0..len).map(|t| dot(&dpooled, &tape.vectors[t * d..(t + 1) * d])).collect();
                let mean_proj: f64 = alpha.iter().zip(&proj).map(|(a, p)| a * p).sum();
                let query: Vec<f64> = self.params[at..at + d].to_vec();
                for t in 0..len {
                    let dscore = alpha[t] * (proj[t] - mean_proj) * scale;
                    for k in 0..d {
                        input_grads[t * d + k] = alpha[t] * dpooled[k] + dscore * query[k];
                    }
                    if let Some((pg, _)) = param_grads.as_mut() {
                        for k in 0..d {
                            pg[at + k] += dscore * tape.vectors[t * d + k];
                        }
                    }
                }
            }
        }

        if let Some((pg, ids)) = param_grads {
            for t in 0..len {
                let id = self.clamp_id(ids[t]) as usize;
                for k in 0..d {
                    pg[id * d + k] += input_grads[t * d + k];
                }
                if let Some(at) = self.layout.positions {
                    let row = t.min(MAX_POSITIONS - 1);
                    for k in 0..d {
                        pg[at + row * d + k] += input_grads[t * d + k];
                    }
                }
            }
        }
    }

    pub fn logits_ids(&self, ids: &[TokenId]) -> [f64; 2] {
        self.forward(&self.embed(ids)).logits
    }

    pub fn predict_proba_ids(&self, ids: &[TokenId]) -> [f64; 2] {
        softmax2(self.logits_ids(ids))
    }

    /// Class probabilities for an example. Examples with no segments or an
    /// empty segment are rejected.
    pub fn predict_proba(&self, vocab: &Vocabulary, example: &Example) -> Result<[f64; 2]> {
        check_input(example)?;
        Ok(self.predict_proba_ids(&example.encode(vocab)))
    }

    /// Gradient of the `class` logit with respect to the input vectors
    /// (`len x dim`).
    pub fn input_gradients(&self, inputs: &[f64], class: usize) -> ([f64; 2], Vec<f64>) {
        let tape = self.forward(inputs);
        let mut grads = vec![0.0; inputs.len()];
        let mut dlogits = [0.0; 2];
        dlogits[class] = 1.0;
        self.backward(&tape, dlogits, &mut grads, None);
        (tape.logits, grads)
    }

    /// Per-token gradients of the `class` logit with respect to each token's
    /// embedding, in flattened sequence order.
    pub fn grad_wrt_embeddings(
        &self,
        vocab: &Vocabulary,
        example: &Example,
        class: usize,
    ) -> Result<Vec<Vec<f64>>> {
        check_input(example)?;
        let inputs = self.embed(&example.encode(vocab));
        let (_, grads) = self.input_gradients(&inputs, class);
        Ok(grads.chunks(self.layout.dim).map(<[f64]>::to_vec).collect())
    }
}

pub fn check_input(example: &Example) -> Result<()> {
    if example.segments.is_empty() {
        return Err(Error::EmptyInput(alloc::format!("example {} has no segments", example.id)));
    }
    if example.segments.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput(alloc::format!("example {} has an empty segment", example.id)));
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Meta, CLS_ID, SEP_ID};
    use alloc::string::ToString;
    use proptest::prelude::*;

    pub(crate) fn spec(architecture: Architecture, seed: u64) -> ModelSpec {
        let hidden_dims = match architecture {
            Architecture::MeanEmbedLinear => vec![],
            _ => vec![6, 5],
        };
        ModelSpec { architecture, embed_dim: 4, hidden_dims, vocab_size: 12, seed }
    }

    const ALL: [Architecture; 3] =
        [Architecture::MeanEmbedLinear, Architecture::MeanEmbedMlp, Architecture::AttnPoolMlp];

    /// Central finite differences of the `class` logit with respect to the
    /// input vectors.
    fn finite_difference(model: &Model, inputs: &[f64], class: usize, h: f64) -> Vec<f64> {
        (0..inputs.len())
            .map(|k| {
                let mut up = inputs.to_vec();
                let mut down = inputs.to_vec();
                up[k] += h;
                down[k] -= h;
                (model.forward(&up).logits[class] - model.forward(&down).logits[class]) / (2.0 * h)
            })
            .collect()
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        for arch in ALL {
            let a = Model::init(spec(arch, 1)).unwrap();
            let b = Model::init(spec(arch, 1)).unwrap();
            let c = Model::init(spec(arch, 2)).unwrap();
            assert_eq!(a.params(), b.params());
            assert_ne!(a.params(), c.params());
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(Architecture::MeanEmbedMlp, 0);
        s.embed_dim = 0;
        assert!(matches!(Model::init(s), Err(Error::InvalidSpec(_))));
        let mut s = spec(Architecture::MeanEmbedMlp, 0);
        s.hidden_dims.clear();
        assert!(Model::init(s).is_err());
        let mut s = spec(Architecture::MeanEmbedLinear, 0);
        s.hidden_dims = vec![3];
        assert!(Model::init(s).is_err());
    }

    #[test]
    fn zero_model_is_uninformative() {
        for arch in ALL {
            let model = Model::init(spec(arch, 3)).unwrap();
            let zero = Model::from_params(model.spec().clone(), vec![0.0; model.params().len()]).unwrap();
            assert_eq!(zero.predict_proba_ids(&[CLS_ID, 5, SEP_ID]), [0.5, 0.5]);
        }
    }

    #[test]
    fn linear_model_matches_closed_form() {
        let model = Model::init(spec(Architecture::MeanEmbedLinear, 5)).unwrap();
        let ids = [CLS_ID, 7, SEP_ID];
        let d = model.embed_dim();
        let mut mean = vec![0.0; d];
        for &id in &ids {
            for (m, e) in mean.iter_mut().zip(model.embedding(id)) {
                *m += e / 3.0;
            }
        }
        let out = model.layout.output;
        let logit = |c: usize| dot(model.output_row(c), &mean) + model.params()[out.bias + c];
        let expected = 1.0 / (1.0 + libm::exp(logit(0) - logit(1)));
        let p = model.predict_proba_ids(&ids);
        assert!((p[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_gradient_is_weight_over_length() {
        let model = Model::init(spec(Architecture::MeanEmbedLinear, 5)).unwrap();
        let vocab_ids = [CLS_ID, 7, 7, 4, SEP_ID];
        let inputs = model.embed(&vocab_ids);
        let (_, grads) = model.input_gradients(&inputs, 1);
        let w = model.output_row(1);
        for t in 0..vocab_ids.len() {
            for k in 0..4 {
                assert!((grads[t * 4 + k] - w[k] / 5.0).abs() < 1e-15);
            }
        }
        // duplicate tokens share gradients
        assert_eq!(grads[4..8], grads[8..12]);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let vocab = Vocabulary::standard();
        let model = Model::init(ModelSpec { vocab_size: vocab.len(), ..spec(Architecture::MeanEmbedMlp, 0) }).unwrap();
        let mut ex = Example { id: "e".into(), segments: vec![], label: 0, meta: Meta::default() };
        assert!(matches!(model.predict_proba(&vocab, &ex), Err(Error::EmptyInput(_))));
        ex.segments = vec![vec!["the".to_string()], vec![]];
        assert!(matches!(model.predict_proba(&vocab, &ex), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn unknown_ids_map_to_mask() {
        let model = Model::init(spec(Architecture::AttnPoolMlp, 1)).unwrap();
        assert_eq!(
            model.predict_proba_ids(&[CLS_ID, 999, SEP_ID]),
            model.predict_proba_ids(&[CLS_ID, MASK_ID, SEP_ID])
        );
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        for arch in ALL {
            let model = Model::init(spec(arch, 9)).unwrap();
            let ids = [CLS_ID, 3, 8, 8, SEP_ID, 5, SEP_ID];
            let tape = model.forward(&model.embed(&ids));
            let mut grads = vec![0.0; model.params().len()];
            let mut input = vec![0.0; ids.len() * 4];
            model.backward(&tape, [0.3, -0.7], &mut input, Some((&mut grads, &ids)));
            let objective = |m: &Model| {
                let l = m.logits_ids(&ids);
                0.3 * l[0] - 0.7 * l[1]
            };
            for k in (0..model.params().len()).step_by(3) {
                let mut up = model.clone();
                let mut down = model.clone();
                up.params_mut()[k] += 1e-5;
                down.params_mut()[k] -= 1e-5;
                let fd = (objective(&up) - objective(&down)) / 2e-5;
                assert!((fd - grads[k]).abs() < 1e-7, "{arch:?} param {k}: {fd} vs {}", grads[k]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn input_gradients_match_central_differences(
            seed in 0u64..10_000,
            arch in 0usize..3,
            ids in proptest::collection::vec(0u32..12, 1..9),
            class in 0usize..2,
        ) {
            let model = Model::init(spec(ALL[arch], seed)).unwrap();
            let inputs = model.embed(&ids);
            let (_, analytic) = model.input_gradients(&inputs, class);
            let numeric = finite_difference(&model, &inputs, class, 1e-4);
            for (a, n) in analytic.iter().zip(&numeric) {
                prop_assert!(relative_error(*a, *n) <= 1e-4, "{a} vs {n}");
            }
        }

        #[test]
        fn probabilities_normalize_and_flip(seed in 0u64..10_000, arch in 0usize..3,
                                            ids in proptest::collection::vec(0u32..12, 1..9)) {
            let mut model = Model::init(spec(ALL[arch], seed)).unwrap();
            let p = model.predict_proba_ids(&ids);
            prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
            model.flip_output();
            let q = model.predict_proba_ids(&ids);
            prop_assert_eq!(q, [p[1], p[0]]);
        }
    }
}
