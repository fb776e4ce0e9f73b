//! FastICA with symmetric decorrelation and the log-cosh contrast.
//!
//! Pipeline: center, whiten onto the top `k` right singular vectors of the
//! centered data, then run the parallel fixed-point iteration with
//! `g(u) = tanh(u)`. The stored components are the rows of the unmixing
//! matrix composed with the whitening matrix, each scaled to unit norm.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ComponentSet, DecompError, FitMeta, Method, Result, Whitening};
use crate::linalg::DenseMatrix;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_RTOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct FastIca {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FastIca {
    fn default() -> Self {
        Self { k: 20, seed: 0, max_iter: 200, tol: 1e-4 }
    }
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.set(r, c, m[(r, c)]);
        }
    }
    out
}

/// `W ← (W Wᵀ)^{-1/2} W`.
pub fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = eig.eigenvalues.map(|s| 1.0 / s.max(f64::MIN_POSITIVE).sqrt());
    let u = &eig.eigenvectors;
    u * DMatrix::from_diagonal(&inv_sqrt) * u.transpose() * w
}

impl FastIca {
    pub fn fit(&self, x: &DenseMatrix) -> Result<ComponentSet> {
        let (n, d) = x.shape();
        let k = self.k;
        if k < 2 || k > d {
            return Err(DecompError::InvalidK { k, d });
        }
        if n <= k {
            return Err(DecompError::TooFewSamples { n, k });
        }

        let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64).collect();
        let mut xc = to_na(x);
        for r in 0..n {
            for c in 0..d {
                xc[(r, c)] -= mean[c];
            }
        }

        let svd = xc.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let s_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let rank = order
            .iter()
            .filter(|&&i| svd.singular_values[i] > (s_max * RANK_RTOL).max(1e-12))
            .count();
        if rank < k {
            return Err(DecompError::RankDeficient { rank, k });
        }

        // whitening K = √n S⁻¹ Vᵀ (k × d); its pseudo-inverse is V S / √n (d × k)
        let sqrt_n = (n as f64).sqrt();
        let mut whiten = DMatrix::zeros(k, d);
        let mut dewhiten = DMatrix::zeros(d, k);
        for (row, &i) in order.iter().take(k).enumerate() {
            let s = svd.singular_values[i];
            for c in 0..d {
                whiten[(row, c)] = sqrt_n / s * v_t[(i, c)];
                dewhiten[(c, row)] = s / sqrt_n * v_t[(i, c)];
            }
        }
        let z = &xc * whiten.transpose(); // n × k, identity covariance

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
        let mut w = symmetric_decorrelation(&init);

        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=self.max_iter {
            iterations = it;
            let y = &z * w.transpose(); // n × k
            let g = y.map(f64::tanh);
            let g_prime_mean: Vec<f64> =
                (0..k).map(|j| g.column(j).iter().map(|t| 1.0 - t * t).sum::<f64>() / n as f64).collect();
            let mut w_new = g.transpose() * &z / n as f64;
            for i in 0..k {
                for j in 0..k {
                    w_new[(i, j)] -= g_prime_mean[i] * w[(i, j)];
                }
            }
            let w_new = symmetric_decorrelation(&w_new);
            let lim = (0..k)
                .map(|i| (w_new.row(i).dot(&w.row(i)).abs() - 1.0).abs())
                .fold(0.0, f64::max);
            w = w_new;
            if !lim.is_finite() {
                break;
            }
            if lim < self.tol {
                converged = true;
                break;
            }
        }

        let unmixing = &w * &whiten; // k × d
        let mixing = &dewhiten * w.transpose(); // d × k
        let meta = FitMeta {
            seed: self.seed,
            lambda: None,
            iterations_run: iterations,
            converged,
            whitening: Some(Whitening {
                mean,
                whitening_matrix: from_na(&whiten),
                mixing_matrix: from_na(&mixing),
            }),
        };
        ComponentSet::new(Method::Ica, &from_na(&unmixing), meta)
    }
}

/// Fits `k` independent components to the rows of `x`.
pub fn fit_ica(x: &DenseMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ComponentSet> {
    FastIca { k, seed, max_iter, tol }.fit(x)
}
