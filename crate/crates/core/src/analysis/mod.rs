//! Role matrices, component comparison, alignment traces and the R-ratio
//! diagnosis.

use thiserror::Error;

use crate::decomposition::DecompError;
use crate::linalg::LinalgError;

mod alignment;
mod compare;
mod diagnosis;
mod roles;
mod stats;

pub use alignment::{alignment_trace, AlignmentTrace};
pub use compare::{component_distance_report, distance_vs_score, DistanceReport, ScorePairs};
pub use diagnosis::{compute_r, diagnose, DiagnosisResult, DiagnosisTarget, PromptScore};
pub use roles::{collect_role_matrix, LayerRange};
pub use stats::{spearman, welch_t_test, WelchTest};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dump has no tokens with role {0}")]
    NoSuchRole(String),
    #[error("component sets differ in dimension: {d_s} vs {d_a}")]
    MethodMismatch { d_s: usize, d_a: usize },
    #[error("layer range {start}..={end} outside 0..={max}")]
    BadLayerRange { start: usize, end: usize, max: usize },
    #[error("no prompt carries a correctness label")]
    MissingLabels,
    #[error("need at least 2 samples per group, got {n_x} and {n_y}")]
    TooFewSamples { n_x: usize, n_y: usize },
    #[error("both groups have zero variance")]
    ZeroVariance,
    #[error("largest coefficient magnitude is below 1e-12")]
    DegenerateTop,
    #[error("top_k = {top_k} needs 2 <= top_k <= {k}")]
    InvalidTopK { top_k: usize, k: usize },
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
