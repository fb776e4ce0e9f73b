//! A synthetic transformer with hand-built associative-memory FFNs.
//!
//! Query words recall context-tagged values through the first FFN, answer
//! words push their context forward, and later FFNs amplify context
//! directions. Because every context direction is known, the residual
//! streams it produces serve as ground truth for the decomposition and
//! analysis stages.

use thiserror::Error;

use crate::linalg::LinalgError;

mod attention;
mod builder;
mod ffn;
mod model;

pub use attention::{
    attention_constant_causal, attention_forward_constant, attention_forward_exact, constant_weights, RoleScores,
    SelfTerm,
};
pub use builder::{ControlMode, ToyBuilder, ToyGroundTruth, ToyModel as BuiltToy};
pub use ffn::{build_associative_ffn, ffn_forward, Activation, FFNSpec};
pub use model::{
    answer_matches, decode_answer, residual_audit, run_model, simulate, AttentionMode, AuditReport, ContextTag,
    ExactLayer, LayerTrace, SimulateOptions, ToyModel, ToyModelConfig,
};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("role mismatch: {0}")]
    RoleMismatch(String),
    #[error("{features} features but {values} values")]
    CountMismatch { features: usize, values: usize },
    #[error("feature {0} is not unit-norm")]
    NonUnitFeature(usize),
    #[error("word not in vocabulary: {0:?}")]
    UnknownWord(String),
    #[error("residual identity violated at layer {layer}, token {token} (error {error:e})")]
    AuditFailure { layer: usize, token: usize, error: f64 },
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ToyError>;
