// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfVocab(u32),
    #[error("context must contain at least one token")]
    EmptyContext,
    #[error("continuation must contain at least one token")]
    EmptyContinuation,
    #[error("tensor `{name}` expected {expected} values, got {actual}")]
    TensorShape {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("attention hook broke row normalization at layer {layer}, head {head}: sum {sum}")]
    HookViolation { layer: usize, head: usize, sum: f32 },
    #[error("layer set is empty")]
    EmptyLayerSet,
    #[error("layer {layer} out of range for a {n_layers}-layer model")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("document {0} renders to an empty token span")]
    EmptyDocument(usize),
    #[error("need at least {need} documents, got {got}")]
    TooFewDocuments { need: usize, got: usize },
    #[error("position {position} out of range for {k} documents")]
    PositionOutOfRange { position: usize, k: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("layer sets differ between attention profile and bias profile")]
    LayerSetMismatch,
    #[error("matrix must be at least 2x2 with rectangular rows")]
    MatrixShape,
    #[error("noise sigma must be >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("no strict (non-tied) pairs to evaluate")]
    DegeneratePairs,
    #[error("correlation undefined for a constant vector")]
    ConstantVector,
    #[error("temperature must be > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("scores must be finite and not all -inf")]
    NonFiniteScores,
    #[error("span {start}..{end} lies outside an attention row of length {len}")]
    SpanOutOfRow { start: usize, end: usize, len: usize },
    #[error("dummy filler text is empty")]
    EmptyFiller,
    #[error("dummy target length must be >= 1")]
    ZeroDummyLength,
    #[error("dummy renders to {actual} tokens, outside 10% of target {target}")]
    DummyLength { target: usize, actual: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("result list is empty")]
    EmptyResults,
    #[error("name pool has {available} entities, need {needed}")]
    NamePoolTooSmall { available: usize, needed: usize },
    #[error("backend cannot serve this request: {0}")]
    Unsupported(String),
}
