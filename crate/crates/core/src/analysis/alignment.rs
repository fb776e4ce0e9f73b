use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::decomposition::{encode_vector, ComponentSet, Method};
use crate::dumpio::ResidualStreamDump;
use crate::linalg::{norm, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrace {
    /// Stored layers, embeddings included.
    pub layers: usize,
    pub k: usize,
    /// `layers × k`, averaged over prompts.
    pub coefficients: DenseMatrix,
    /// Whether magnitudes were averaged (ICA components carry no sign).
    pub absolute: bool,
    /// One `layers × k` matrix per prompt, before averaging.
    pub per_prompt: Vec<DenseMatrix>,
}

/// Codes of every prompt's final-separator residual at every layer.
pub fn alignment_trace(dump: &ResidualStreamDump, comp_a: &ComponentSet, lambda: f64) -> Result<AlignmentTrace> {
    if dump.hidden_dim != comp_a.d() {
        return Err(AnalysisError::MethodMismatch { d_s: dump.hidden_dim, d_a: comp_a.d() });
    }
    let absolute = comp_a.method() == Method::Ica;
    let layers = dump.layers_stored();
    let k = comp_a.k();
    let targets: Vec<usize> = (0..dump.prompts.len())
        .map(|p| dump.final_separator(p).ok_or_else(|| AnalysisError::NoSuchRole("FinalSeparator".into())))
        .collect::<Result<_>>()?;
    if targets.is_empty() {
        return Err(AnalysisError::NoSuchRole("FinalSeparator".into()));
    }
    let per_prompt: Vec<DenseMatrix> = targets
        .par_iter()
        .map(|&tok| {
            let mut m = DenseMatrix::zeros(layers, k);
            for l in 0..layers {
                let h = dump.vector_f64(tok, l);
                let n = norm(&h);
                if n == 0.0 {
                    continue;
                }
                let unit: Vec<f64> = h.iter().map(|x| x / n).collect();
                let codes = encode_vector(&unit, comp_a, lambda)?;
                for (j, c) in codes.into_iter().enumerate() {
                    m.set(l, j, if absolute { c.abs() } else { c });
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut coefficients = DenseMatrix::zeros(layers, k);
    let n = per_prompt.len() as f64;
    for m in &per_prompt {
        for l in 0..layers {
            for j in 0..k {
                coefficients.set(l, j, coefficients.get(l, j) + m.get(l, j) / n);
            }
        }
    }
    Ok(AlignmentTrace { layers, k, coefficients, absolute, per_prompt })
}
