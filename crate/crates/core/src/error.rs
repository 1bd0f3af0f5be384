use alloc::string::String;

use crate::corpus::WordClass;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vocabulary lacks required word class `{0}`")]
    MissingWordClass(WordClass),

    #[error("inoculation pool too small: requested {requested} qualifying examples, {available} available")]
    PoolExhausted { requested: usize, available: usize },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("non-finite gradient at integration step {step}")]
    NonFiniteGradient { step: usize },

    #[error("{method} supports at most {limit} tokens, got {players}")]
    TooManyPlayers { method: &'static str, players: usize, limit: usize },

    #[error("factor `{factor}` is not applicable: example {example_id} lacks {missing}")]
    InapplicableFactor { factor: &'static str, example_id: String, missing: &'static str },

    #[error("GUESS is a suite-level baseline; use `guess_baseline` instead of per-example scores")]
    GuessPerExample,

    #[error("bootstrap samples differ between `{0}` and `{1}`")]
    MismatchedSamples(String, String),

    #[error("unknown method `{0}` in report")]
    UnknownMethod(String),

    #[error("need at least {needed} models, got {got}")]
    TooFewModels { needed: usize, got: usize },

    #[error("{0}")]
    Validation(String),
}
