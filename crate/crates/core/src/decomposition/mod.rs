//! Component analysis of residual streams: sparse dictionary learning,
//! FastICA, and sparse encoding against a fixed component set.
//!
//! Samples are always rows. Both methods produce a [`ComponentSet`] whose
//! rows are unit-norm directions in the ambient space, so component sets
//! from either method can be compared with the same distance functions.

mod dictionary;
mod ica;
mod lasso;
mod registry;

pub use dictionary::{fit_dictionary, DictionaryFit, DictionaryLearner};
pub use ica::{fit_ica, symmetric_decorrelation, FastIca};
pub use lasso::{encode, encode_vector};
pub use registry::{Decomposer, DecomposerRegistry, Decomposition, FitParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{normalize_rows, DenseMatrix, LinalgError};

/// Default sparsity penalty for fitting a dictionary.
pub const DEFAULT_FIT_LAMBDA: f64 = 1.0;
/// Default sparsity penalty for encoding against fixed components.
pub const DEFAULT_ENCODE_LAMBDA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error("too few samples: {n} rows for {k} components")]
    TooFewSamples { n: usize, k: usize },
    #[error("invalid component count {k} for dimension {d}")]
    InvalidK { k: usize, d: usize },
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },
    #[error("data has rank {rank}, fewer than the {k} requested components")]
    RankDeficient { rank: usize, k: usize },
    #[error("dimension mismatch: components have d={expected}, targets have {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component {0} has zero norm")]
    ZeroComponent(usize),
    #[error("unknown decomposition method '{0}'")]
    UnknownMethod(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, DecompError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dictionary,
    Ica,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dictionary => "dictionary",
            Method::Ica => "ica",
        }
    }

    /// ICA components carry no sign, so they are compared with the
    /// signless distance.
    pub fn signless(self) -> bool {
        matches!(self, Method::Ica)
    }
}

/// Centering and whitening state of an ICA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    pub mean: Vec<f64>,
    /// `k × d`; maps centered samples to whitened coordinates.
    pub whitening_matrix: DenseMatrix,
    /// `d × k`; columns are the estimated source patterns in ambient space.
    pub mixing_matrix: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitMeta {
    pub seed: u64,
    pub lambda: Option<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub whitening: Option<Whitening>,
}

/// `k` unit-norm components of dimension `d`, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComponentSetJson", into = "ComponentSetJson")]
pub struct ComponentSet {
    method: Method,
    components: DenseMatrix,
    meta: FitMeta,
}

impl ComponentSet {
    /// Normalizes every row of `components` to unit norm.
    pub fn new(method: Method, components: &DenseMatrix, meta: FitMeta) -> Result<Self> {
        let components = normalize_rows(components).map_err(|e| match e {
            LinalgError::ZeroRow(i) => DecompError::ZeroComponent(i),
            other => other.into(),
        })?;
        Ok(Self { method, components, meta })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn d(&self) -> usize {
        self.components.cols()
    }

    pub fn components(&self) -> &DenseMatrix {
        &self.components
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }
}

/// Sparse codes of a set of targets against fixed components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingMatrix {
    /// `n_samples × k`.
    pub codes: DenseMatrix,
    /// `0.5‖X − R·V‖²_F + λ‖R‖₁` on the stored codes.
    pub reconstruction_error: f64,
    pub lambda: f64,
}

/// `0.5‖X − R·V‖²_F + λ‖R‖₁`.
pub fn lasso_objective(x: &DenseMatrix, codes: &DenseMatrix, components: &DenseMatrix, lambda: f64) -> f64 {
    let mut sq = 0.0;
    for i in 0..x.rows() {
        let r = codes.row(i);
        for (c, &xc) in x.row(i).iter().enumerate() {
            let recon: f64 = r.iter().enumerate().map(|(j, rj)| rj * components.get(j, c)).sum();
            sq += (xc - recon).powi(2);
        }
    }
    let l1: f64 = codes.data().iter().map(|v| v.abs()).sum();
    0.5 * sq + lambda * l1
}

#[derive(Serialize, Deserialize)]
struct WhiteningJson {
    mean: Vec<f64>,
    whitening_matrix: Vec<Vec<f64>>,
    mixing_matrix: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ComponentSetJson {
    method: Method,
    k: usize,
    d: usize,
    seed: u64,
    lambda: Option<f64>,
    iterations_run: usize,
    converged: bool,
    components: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    whitening: Option<WhiteningJson>,
}

impl From<ComponentSet> for ComponentSetJson {
    fn from(c: ComponentSet) -> Self {
        Self {
            method: c.method,
            k: c.k(),
            d: c.d(),
            seed: c.meta.seed,
            lambda: c.meta.lambda,
            iterations_run: c.meta.iterations_run,
            converged: c.meta.converged,
            components: c.components.to_rows(),
            whitening: c.meta.whitening.map(|w| WhiteningJson {
                mean: w.mean,
                whitening_matrix: w.whitening_matrix.to_rows(),
                mixing_matrix: w.mixing_matrix.to_rows(),
            }),
        }
    }
}

impl TryFrom<ComponentSetJson> for ComponentSet {
    type Error = DecompError;

    fn try_from(j: ComponentSetJson) -> Result<Self> {
        let components = DenseMatrix::from_rows(&j.components)?;
        if components.rows() != j.k || components.cols() != j.d {
            return Err(DecompError::InvalidK { k: j.k, d: j.d });
        }
        let whitening = match j.whitening {
            Some(w) => Some(Whitening {
                mean: w.mean,
                whitening_matrix: DenseMatrix::from_rows(&w.whitening_matrix)?,
                mixing_matrix: DenseMatrix::from_rows(&w.mixing_matrix)?,
            }),
            None => None,
        };
        let meta = FitMeta {
            seed: j.seed,
            lambda: j.lambda,
            iterations_run: j.iterations_run,
            converged: j.converged,
            whitening,
        };
        ComponentSet::new(j.method, &components, meta)
    }
}
