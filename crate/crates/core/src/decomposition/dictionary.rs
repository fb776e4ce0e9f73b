//! Sparse dictionary learning.
//!
//! Minimizes `0.5‖X − R·V‖²_F + λ‖R‖₁` with unit-norm atoms (rows of `V`)
//! by alternating a lasso coding step with a block coordinate pass over the
//! atoms. Both steps are exact block minimizations, so the objective never
//! increases from one outer iteration to the next.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lasso::encode_rows;
use super::{lasso_objective, CodingMatrix, ComponentSet, DecompError, FitMeta, Method, Result};
use crate::linalg::{dot, norm, DenseMatrix, ZERO_NORM};

const CODING_MAX_SWEEPS: usize = 200;
const CODING_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DictionaryLearner {
    pub k: usize,
    pub lambda: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for DictionaryLearner {
    fn default() -> Self {
        Self { k: 300, lambda: super::DEFAULT_FIT_LAMBDA, seed: 0, max_iter: 100, tol: 1e-6 }
    }
}

/// Result of a dictionary fit, including the objective after every outer
/// iteration (entry 0 is the all-zero-codes starting point).
#[derive(Debug, Clone)]
pub struct DictionaryFit {
    pub components: ComponentSet,
    pub coding: CodingMatrix,
    pub objective_history: Vec<f64>,
}

impl DictionaryLearner {
    pub fn fit(&self, x: &DenseMatrix) -> Result<DictionaryFit> {
        let (n, d) = x.shape();
        let k = self.k;
        if k == 0 || d == 0 {
            return Err(DecompError::InvalidK { k, d });
        }
        if n < k {
            return Err(DecompError::TooFewSamples { n, k });
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(DecompError::InvalidLambda(self.lambda));
        }

        let mut atoms = self.initial_atoms(x);
        let mut codes = DenseMatrix::zeros(n, k);
        let mut history = vec![lasso_objective(x, &codes, &atoms, self.lambda)];
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=self.max_iter {
            iterations = it;
            codes = encode_rows(x, &atoms, self.lambda, Some(&codes), CODING_MAX_SWEEPS, CODING_TOL);
            let reseeded = update_atoms(x, &codes, &mut atoms);
            let obj = lasso_objective(x, &codes, &atoms, self.lambda);
            if !obj.is_finite() {
                return Err(DecompError::NonFiniteObjective { iteration: it });
            }
            let prev = *history.last().expect("history starts non-empty");
            history.push(obj);
            // a re-seeded atom has no codes yet, so the objective cannot see it
            if reseeded == 0 && prev - obj < self.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }

        let reconstruction_error = *history.last().expect("non-empty");
        let meta = FitMeta {
            seed: self.seed,
            lambda: Some(self.lambda),
            iterations_run: iterations,
            converged,
            whitening: None,
        };
        Ok(DictionaryFit {
            components: ComponentSet::new(Method::Dictionary, &atoms, meta)?,
            coding: CodingMatrix { codes, reconstruction_error, lambda: self.lambda },
            objective_history: history,
        })
    }

    /// `k` normalized samples picked k-means++ style: each pick is drawn with
    /// probability proportional to its squared signless distance from the
    /// nearest atom so far, so repeated directions (up to sign) are avoided.
    fn initial_atoms(&self, x: &DenseMatrix) -> DenseMatrix {
        let (n, d) = x.shape();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit: Vec<Option<Vec<f64>>> = x
            .row_iter()
            .map(|row| {
                let nr = norm(row);
                (nr >= ZERO_NORM).then(|| row.iter().map(|v| v / nr).collect())
            })
            .collect();
        let mut atoms = DenseMatrix::zeros(self.k, d);
        let mut weight = vec![1.0; n];
        let mut picked = vec![false; n];
        for j in 0..self.k {
            let total: f64 = weight.iter().zip(&picked).filter(|(_, p)| !**p).map(|(w, _)| w).sum();
            let i = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut choice = None;
                for (i, w) in weight.iter().enumerate() {
                    if picked[i] || *w <= 0.0 {
                        continue;
                    }
                    choice = Some(i);
                    target -= w;
                    if target <= 0.0 {
                        break;
                    }
                }
                choice.expect("positive total weight")
            } else {
                // every remaining sample repeats an atom
                let rest: Vec<usize> = (0..n).filter(|&i| !picked[i]).collect();
                rest[rng.random_range(0..rest.len())]
            };
            picked[i] = true;
            let atom = atoms.row_mut(j);
            match &unit[i] {
                Some(u) => atom.copy_from_slice(u),
                None => atom[j % d] = 1.0,
            }
            let atom = atoms.row(j).to_vec();
            for (w, u) in weight.iter_mut().zip(&unit) {
                let dist = match u {
                    Some(u) => 1.0 - dot(u, &atom).abs(),
                    None => 0.0,
                };
                *w = w.min(dist * dist);
            }
        }
        atoms
    }
}

/// One block coordinate pass over the atoms with the codes held fixed.
///
/// For atom `j` the exact minimizer on the unit sphere is the normalized
/// `Eⱼᵀ rⱼ`, where `Eⱼ` is the residual with atom `j`'s contribution added
/// back. Atoms with all-zero codes do not affect the objective and are
/// re-seeded to the direction of the worst-reconstructed sample. Returns the
/// number of re-seeded atoms.
fn update_atoms(x: &DenseMatrix, codes: &DenseMatrix, atoms: &mut DenseMatrix) -> usize {
    let (n, d) = x.shape();
    let k = atoms.rows();
    let mut residual = x.clone();
    for i in 0..n {
        let r = codes.row(i);
        let e = residual.row_mut(i);
        for (j, &rij) in r.iter().enumerate() {
            if rij != 0.0 {
                for (ec, vc) in e.iter_mut().zip(atoms.row(j)) {
                    *ec -= rij * vc;
                }
            }
        }
    }

    let mut dead = Vec::new();
    let mut new_atom = vec![0.0; d];
    for j in 0..k {
        let col_sq: f64 = (0..n).map(|i| codes.get(i, j).powi(2)).sum();
        if col_sq == 0.0 {
            dead.push(j);
            continue;
        }
        new_atom.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let rij = codes.get(i, j);
            if rij == 0.0 {
                continue;
            }
            // Eⱼ = E + rⱼ vⱼᵀ
            let e = residual.row_mut(i);
            for ((ec, vc), nc) in e.iter_mut().zip(atoms.row(j)).zip(new_atom.iter_mut()) {
                *ec += rij * vc;
                *nc += rij * *ec;
            }
        }
        let nrm = norm(&new_atom);
        let keep_old = nrm < ZERO_NORM;
        if !keep_old {
            atoms.row_mut(j).iter_mut().zip(&new_atom).for_each(|(a, v)| *a = v / nrm);
        }
        for i in 0..n {
            let rij = codes.get(i, j);
            if rij == 0.0 {
                continue;
            }
            let e = residual.row_mut(i);
            for (ec, vc) in e.iter_mut().zip(atoms.row(j)) {
                *ec -= rij * vc;
            }
        }
    }

    if dead.is_empty() {
        return 0;
    }
    let reseeded = dead.len();
    let mut errors: Vec<(usize, f64)> = (0..n).map(|i| (i, norm(residual.row(i)))).collect();
    // worst first; ties by sample index
    errors.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (j, (i, _)) in dead.into_iter().zip(errors) {
        let row = x.row(i);
        let nrm = norm(row);
        if nrm >= ZERO_NORM {
            atoms.row_mut(j).iter_mut().zip(row).for_each(|(a, v)| *a = v / nrm);
        }
    }
    reseeded
}

/// Fits `k` atoms to the rows of `x` and returns them with the final codes.
pub fn fit_dictionary(
    x: &DenseMatrix,
    k: usize,
    lambda: f64,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(ComponentSet, CodingMatrix)> {
    let fit = DictionaryLearner { k, lambda, seed, max_iter, tol }.fit(x)?;
    Ok((fit.components, fit.coding))
}
