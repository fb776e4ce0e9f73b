//! Per-sample lasso by cyclic coordinate descent.

use rayon::prelude::*;

use super::{lasso_objective, CodingMatrix, ComponentSet, DecompError, Result};
use crate::linalg::{dot, DenseMatrix};

pub(crate) const ENCODE_MAX_SWEEPS: usize = 1000;
pub(crate) const ENCODE_TOL: f64 = 1e-10;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `V Vᵀ` as a flat `k × k` array.
pub(crate) fn gram(components: &DenseMatrix) -> Vec<f64> {
    let k = components.rows();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = dot(components.row(i), components.row(j));
            g[i * k + j] = v;
            g[j * k + i] = v;
        }
    }
    g
}

/// Minimizes `0.5‖x − Vᵀr‖² + λ‖r‖₁` over `r`, starting from the contents of
/// `codes`. `b = V x`. Coordinates are visited in ascending order; each
/// update is an exact coordinate minimization, so the objective never
/// increases. Returns the number of sweeps run.
pub(crate) fn coordinate_descent(
    gram: &[f64],
    b: &[f64],
    lambda: f64,
    codes: &mut [f64],
    max_sweeps: usize,
    tol: f64,
) -> usize {
    let k = b.len();
    // c = b − G r
    let mut c: Vec<f64> = (0..k)
        .map(|j| b[j] - (0..k).map(|i| gram[j * k + i] * codes[i]).sum::<f64>())
        .collect();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..k {
            let gjj = gram[j * k + j];
            if gjj <= 0.0 {
                continue;
            }
            let rho = c[j] + gjj * codes[j];
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - codes[j];
            if delta != 0.0 {
                codes[j] = new;
                let row = &gram[j * k..(j + 1) * k];
                for (ci, gij) in c.iter_mut().zip(row) {
                    *ci -= gij * delta;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta <= tol {
            break;
        }
    }
    sweeps
}

/// Codes for every row of `targets`, optionally warm-started.
pub(crate) fn encode_rows(
    targets: &DenseMatrix,
    components: &DenseMatrix,
    lambda: f64,
    warm: Option<&DenseMatrix>,
    max_sweeps: usize,
    tol: f64,
) -> DenseMatrix {
    let k = components.rows();
    let g = gram(components);
    let rows: Vec<Vec<f64>> = (0..targets.rows())
        .into_par_iter()
        .map(|i| {
            let x = targets.row(i);
            let b: Vec<f64> = components.row_iter().map(|v| dot(v, x)).collect();
            let mut r = warm.map_or_else(|| vec![0.0; k], |w| w.row(i).to_vec());
            coordinate_descent(&g, &b, lambda, &mut r, max_sweeps, tol);
            r
        })
        .collect();
    let mut codes = DenseMatrix::zeros(targets.rows(), k);
    for (i, r) in rows.into_iter().enumerate() {
        codes.row_mut(i).copy_from_slice(&r);
    }
    codes
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(DecompError::InvalidLambda(lambda));
    }
    Ok(())
}

/// Sparse codes of each target row against the fixed component rows.
/// With `lambda = 0` this is least squares on the component span.
pub fn encode(targets: &DenseMatrix, components: &ComponentSet, lambda: f64) -> Result<CodingMatrix> {
    check_lambda(lambda)?;
    if targets.cols() != components.d() {
        return Err(DecompError::DimensionMismatch { expected: components.d(), found: targets.cols() });
    }
    let v = components.components();
    let codes = encode_rows(targets, v, lambda, None, ENCODE_MAX_SWEEPS, ENCODE_TOL);
    let reconstruction_error = lasso_objective(targets, &codes, v, lambda);
    Ok(CodingMatrix { codes, reconstruction_error, lambda })
}

/// Codes of a single target vector.
pub fn encode_vector(target: &[f64], components: &ComponentSet, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if target.len() != components.d() {
        return Err(DecompError::DimensionMismatch { expected: components.d(), found: target.len() });
    }
    let v = components.components();
    let g = gram(v);
    let b: Vec<f64> = v.row_iter().map(|row| dot(row, target)).collect();
    let mut r = vec![0.0; v.rows()];
    coordinate_descent(&g, &b, lambda, &mut r, ENCODE_MAX_SWEEPS, ENCODE_TOL);
    Ok(r)
}
