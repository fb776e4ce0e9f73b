//! Named decomposition strategies selectable at runtime.

use std::collections::BTreeMap;

use super::{
    CodingMatrix, ComponentSet, DecompError, DictionaryLearner, FastIca, Method, Result, DEFAULT_FIT_LAMBDA,
};
use crate::linalg::DenseMatrix;

/// Hyperparameters shared by every decomposer. Fields a method does not use
/// are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub k: usize,
    pub lambda: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: ComponentSet,
    /// Codes of the fitted samples, when the method produces them.
    pub coding: Option<CodingMatrix>,
}

pub trait Decomposer: Send + Sync {
    fn name(&self) -> &'static str;

    fn method(&self) -> Method;

    fn default_params(&self) -> FitParams;

    fn fit(&self, x: &DenseMatrix, params: &FitParams) -> Result<Decomposition>;
}

struct DictionaryDecomposer;

impl Decomposer for DictionaryDecomposer {
    fn name(&self) -> &'static str {
        "dictionary"
    }

    fn method(&self) -> Method {
        Method::Dictionary
    }

    fn default_params(&self) -> FitParams {
        let d = DictionaryLearner::default();
        FitParams { k: d.k, lambda: d.lambda, seed: d.seed, max_iter: d.max_iter, tol: d.tol }
    }

    fn fit(&self, x: &DenseMatrix, p: &FitParams) -> Result<Decomposition> {
        let fit = DictionaryLearner { k: p.k, lambda: p.lambda, seed: p.seed, max_iter: p.max_iter, tol: p.tol }
            .fit(x)?;
        Ok(Decomposition { components: fit.components, coding: Some(fit.coding) })
    }
}

struct IcaDecomposer;

impl Decomposer for IcaDecomposer {
    fn name(&self) -> &'static str {
        "ica"
    }

    fn method(&self) -> Method {
        Method::Ica
    }

    fn default_params(&self) -> FitParams {
        let d = FastIca::default();
        FitParams { k: d.k, lambda: DEFAULT_FIT_LAMBDA, seed: d.seed, max_iter: d.max_iter, tol: d.tol }
    }

    fn fit(&self, x: &DenseMatrix, p: &FitParams) -> Result<Decomposition> {
        let components = FastIca { k: p.k, seed: p.seed, max_iter: p.max_iter, tol: p.tol }.fit(x)?;
        Ok(Decomposition { components, coding: None })
    }
}

pub struct DecomposerRegistry {
    entries: BTreeMap<&'static str, Box<dyn Decomposer>>,
}

impl Default for DecomposerRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl DecomposerRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    /// Registry holding `dictionary` and `ica`.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(DictionaryDecomposer));
        r.register(Box::new(IcaDecomposer));
        r
    }

    /// Adds a decomposer, replacing any previous one with the same name.
    pub fn register(&mut self, decomposer: Box<dyn Decomposer>) {
        self.entries.insert(decomposer.name(), decomposer);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Decomposer> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| DecompError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
