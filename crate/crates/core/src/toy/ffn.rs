//! Two-layer feed-forward networks built as associative memories: each
//! hidden unit detects one feature (a row of the first weight matrix) and
//! writes one value (the matching column of the second).

use serde::{Deserialize, Serialize};

use super::{Result, ToyError};
use crate::linalg::{dot, norm, DenseMatrix};

const UNIT_TOL: f64 = 1e-9;
const COHERENCE_WARN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    GELU,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::GELU => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FFNSpec {
    /// `n_mem × d`; row `i` is feature `f_i`.
    pub w_first: DenseMatrix,
    /// `d × n_mem`; column `i` is value `v_i`.
    pub w_second: DenseMatrix,
    pub activation: Activation,
}

impl FFNSpec {
    /// An FFN with no memory cells; its output is always zero.
    pub fn empty(d: usize, activation: Activation) -> Self {
        Self { w_first: DenseMatrix::zeros(0, d), w_second: DenseMatrix::zeros(d, 0), activation }
    }

    pub fn n_mem(&self) -> usize {
        self.w_first.rows()
    }

    pub fn d(&self) -> usize {
        self.w_first.cols()
    }

    /// Largest `|f_i · f_j|` over distinct features.
    pub fn max_coherence(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_mem() {
            for j in i + 1..self.n_mem() {
                worst = worst.max(dot(self.w_first.row(i), self.w_first.row(j)).abs());
            }
        }
        worst
    }

    pub(crate) fn validate(&self, d: usize) -> Result<()> {
        if self.w_first.cols() != d || self.w_second.rows() != d {
            return Err(ToyError::DimensionMismatch { expected: d, found: self.w_first.cols() });
        }
        if self.w_first.rows() != self.w_second.cols() {
            return Err(ToyError::CountMismatch { features: self.w_first.rows(), values: self.w_second.cols() });
        }
        Ok(())
    }
}

/// Sets row `i` of the first layer to `features[i]` and column `i` of the
/// second layer to `values[i]`.
pub fn build_associative_ffn(features: &[Vec<f64>], values: &[Vec<f64>], activation: Activation) -> Result<FFNSpec> {
    if features.len() != values.len() {
        return Err(ToyError::CountMismatch { features: features.len(), values: values.len() });
    }
    for (i, f) in features.iter().enumerate() {
        if (norm(f) - 1.0).abs() > UNIT_TOL {
            return Err(ToyError::NonUnitFeature(i));
        }
    }
    let w_first = DenseMatrix::from_rows(features)?;
    let d = features.first().map_or(0, Vec::len);
    if let Some(v) = values.iter().find(|v| v.len() != d) {
        return Err(ToyError::DimensionMismatch { expected: d, found: v.len() });
    }
    let w_second = DenseMatrix::from_rows(values)?.transpose();
    let spec = FFNSpec {
        w_first: if features.is_empty() { DenseMatrix::zeros(0, d) } else { w_first },
        w_second: if values.is_empty() { DenseMatrix::zeros(d, 0) } else { w_second },
        activation,
    };
    let coherence = spec.max_coherence();
    if coherence > COHERENCE_WARN {
        log::warn!("associative FFN features have mutual coherence {coherence:.3} > {COHERENCE_WARN}");
    }
    Ok(spec)
}

/// `O_k = Σ_i w2[k][i] · g(Σ_j w1[i][j] · x_j)`.
pub fn ffn_forward(ffn: &FFNSpec, x: &[f64]) -> Result<Vec<f64>> {
    let d = ffn.d();
    if x.len() != d {
        return Err(ToyError::DimensionMismatch { expected: d, found: x.len() });
    }
    let mut out = vec![0.0; ffn.w_second.rows()];
    for i in 0..ffn.n_mem() {
        let act = ffn.activation.apply(dot(ffn.w_first.row(i), x));
        if act == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += ffn.w_second.get(k, i) * act;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn two_memory_ffn() -> (FFNSpec, Vec<f64>, Vec<f64>) {
        let v1 = vec![0.5, -1.0, 2.0, 0.0];
        let v2 = vec![1.0, 1.0, 0.0, 3.0];
        let ffn = build_associative_ffn(&[e(4, 0), e(4, 1)], &[v1.clone(), v2.clone()], Activation::ReLU).unwrap();
        (ffn, v1, v2)
    }

    #[test]
    fn retrieves_value_for_feature() {
        let (ffn, v1, _) = two_memory_ffn();
        assert_eq!(ffn_forward(&ffn, &e(4, 0)).unwrap(), v1);
    }

    #[test]
    fn superposition_of_features() {
        let (ffn, v1, v2) = two_memory_ffn();
        let out = ffn_forward(&ffn, &[0.5, 0.5, 0.0, 0.0]).unwrap();
        for k in 0..4 {
            assert!((out[k] - (0.5 * v1[k] + 0.5 * v2[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn inactive_input_gives_zero() {
        let (ffn, _, _) = two_memory_ffn();
        assert_eq!(ffn_forward(&ffn, &[0.0, 0.0, 0.7, -0.2]).unwrap(), vec![0.0; 4]);
        assert_eq!(ffn_forward(&ffn, &[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            build_associative_ffn(&[e(3, 0)], &[], Activation::ReLU),
            Err(ToyError::CountMismatch { features: 1, values: 0 })
        ));
        assert!(matches!(
            build_associative_ffn(&[vec![2.0, 0.0, 0.0]], &[vec![1.0; 3]], Activation::ReLU),
            Err(ToyError::NonUnitFeature(0))
        ));
        let (ffn, _, _) = two_memory_ffn();
        assert!(matches!(ffn_forward(&ffn, &[1.0]), Err(ToyError::DimensionMismatch { .. })));
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (n_mem, d) = (7, 5);
        for activation in [Activation::ReLU, Activation::GELU] {
            let features: Vec<Vec<f64>> = (0..n_mem)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let n = norm(&v);
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect();
            let values: Vec<Vec<f64>> =
                (0..n_mem).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let ffn = build_associative_ffn(&features, &values, activation).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = ffn_forward(&ffn, &x).unwrap();
            for k in 0..d {
                let mut o = 0.0;
                for i in 0..n_mem {
                    let mut m = 0.0;
                    for j in 0..d {
                        m += features[i][j] * x[j];
                    }
                    let g = match activation {
                        Activation::ReLU => m.max(0.0),
                        Activation::GELU => {
                            0.5 * m * (1.0 + libm::erf(m / 2f64.sqrt()))
                        }
                    };
                    o += values[i][k] * g;
                }
                assert!((got[k] - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(Activation::GELU.apply(0.0), 0.0);
        // GELU(1) = Φ(1) ≈ 0.841344746
        let g = Activation::GELU.apply(1.0);
        assert!((g - 0.841_344_746_068_542_9).abs() < 1e-12, "{g:.17}");
    }
}
