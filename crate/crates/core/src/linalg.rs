//! Dense row-major matrices and the cosine distances used to compare
//! component sets.
//!
//! Component sets are always stored as `(k × d)` with one component per row,
//! so every distance here is taken between rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Euclidean norm below which a vector is treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("row {0} has (near-)zero norm")]
    ZeroRow(usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("zero vector at row {row} of matrix {matrix}")]
    ZeroVectorAt { matrix: char, row: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = LinalgError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting bad shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(LinalgError::BadShape { rows, cols, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Stacks equal-length rows. An empty iterator yields a `0 × 0` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(m: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = m.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let n = norm(row);
        if n < ZERO_NORM {
            return Err(LinalgError::ZeroRow(i));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(LinalgError::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    let (nu2, nv2) = (dot(u, u), dot(v, v));
    if nu2.sqrt() < ZERO_NORM || nv2.sqrt() < ZERO_NORM {
        return Err(LinalgError::ZeroVector);
    }
    Ok((dot(u, v) / (nu2 * nv2).sqrt()).clamp(-1.0, 1.0))
}

/// `1 − cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    cosine(u, v).map(|c| 1.0 - c)
}

/// `min(D, 2 − D)`: the cosine distance with antipodal vectors identified,
/// in `[0, 1]`.
pub fn signless_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    // 1 − |cos| equals min(D, 2 − D) and is exactly symmetric under negation.
    cosine(u, v).map(|c| 1.0 - c.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub values: DenseMatrix,
    pub signless: bool,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

/// Distance between every row of `a` and every row of `b`.
pub fn pairwise_distances(a: &DenseMatrix, b: &DenseMatrix, signless: bool) -> Result<DistanceMatrix> {
    if a.cols != b.cols {
        return Err(LinalgError::DimensionMismatch { expected: a.cols, found: b.cols });
    }
    for (label, m) in [('A', a), ('B', b)] {
        if let Some(row) = m.row_iter().position(|r| norm(r) < ZERO_NORM) {
            return Err(LinalgError::ZeroVectorAt { matrix: label, row });
        }
    }
    let metric = if signless { signless_distance } else { cosine_distance };
    let rows: Vec<Vec<f64>> = (0..a.rows)
        .into_par_iter()
        .map(|i| b.row_iter().map(|bj| metric(a.row(i), bj)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let data = rows.into_iter().flatten().collect();
    Ok(DistanceMatrix {
        values: DenseMatrix::new(a.rows, b.rows, data)?,
        signless,
        row_labels: (0..a.rows).collect(),
        col_labels: (0..b.rows).collect(),
    })
}

/// Axis along which [`min_distance_per_component`] reduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinAxis {
    /// One minimum per column, taken over all rows.
    PerCol,
}

/// For each column `j`, `min_i D[i, j]`.
pub fn min_distance_per_component(dmat: &DistanceMatrix, axis: MinAxis) -> Result<Vec<f64>> {
    let m = &dmat.values;
    if m.is_empty() {
        return Err(LinalgError::EmptyMatrix);
    }
    match axis {
        MinAxis::PerCol => Ok((0..m.cols)
            .map(|j| (0..m.rows).map(|i| m.get(i, j)).fold(f64::INFINITY, f64::min))
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let m = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let n = normalize_rows(&m).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15 && (n.get(0, 1) - 0.8).abs() < 1e-15);

        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(normalize_rows(&m).unwrap(), DenseMatrix::identity(2));

        let n = normalize_rows(&random_matrix(10, 8, 3)).unwrap();
        for r in n.row_iter() {
            assert!((norm(r) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(normalize_rows(&m), Err(LinalgError::ZeroRow(1)));
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(DenseMatrix::new(2, 2, vec![1.0]), Err(LinalgError::BadShape { .. })));
    }

    #[test]
    fn distance_examples() {
        let u = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        assert_eq!(cosine_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(cosine_distance(&u, &neg).unwrap(), 2.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);

        assert_eq!(signless_distance(&u, &neg).unwrap(), 0.0);
        assert_eq!(signless_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(signless_distance(&[1.0, 1.0], &[-1.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn distance_errors() {
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(LinalgError::ZeroVector));
        assert!(matches!(
            signless_distance(&[1.0], &[1.0, 0.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        let a = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(
            pairwise_distances(&a, &b, false).unwrap_err(),
            LinalgError::ZeroVectorAt { matrix: 'B', row: 1 }
        );
    }

    #[test]
    fn pairwise_examples() {
        let a = random_matrix(4, 6, 11);
        let d = pairwise_distances(&a, &a, false).unwrap();
        for i in 0..4 {
            assert!(d.values.get(i, i).abs() < 1e-15);
        }

        let id = DenseMatrix::identity(3);
        let mut neg = id.clone();
        neg.scale(-1.0);
        let d = pairwise_distances(&id, &neg, true).unwrap();
        for i in 0..3 {
            assert_eq!(d.values.get(i, i), 0.0);
        }

        let (a, b) = (random_matrix(3, 7, 1), random_matrix(5, 7, 2));
        for signless in [false, true] {
            let d = pairwise_distances(&a, &b, signless).unwrap();
            assert_eq!(d.values.shape(), (3, 5));
            for i in 0..3 {
                for j in 0..5 {
                    let scalar = if signless {
                        signless_distance(a.row(i), b.row(j)).unwrap()
                    } else {
                        cosine_distance(a.row(i), b.row(j)).unwrap()
                    };
                    assert!((d.values.get(i, j) - scalar).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn min_per_column() {
        let single = DistanceMatrix {
            values: DenseMatrix::from_rows(&[[0.3]]).unwrap(),
            signless: false,
            row_labels: vec![0],
            col_labels: vec![0],
        };
        assert_eq!(min_distance_per_component(&single, MinAxis::PerCol).unwrap(), vec![0.3]);

        let with_zero = DistanceMatrix {
            values: DenseMatrix::from_rows(&[[0.5, 0.9], [0.0, 0.7]]).unwrap(),
            signless: false,
            row_labels: vec![0, 1],
            col_labels: vec![0, 1],
        };
        assert_eq!(min_distance_per_component(&with_zero, MinAxis::PerCol).unwrap(), vec![0.0, 0.7]);

        let m = random_matrix(4, 6, 5);
        let dm = DistanceMatrix { values: m.clone(), signless: false, row_labels: vec![], col_labels: vec![] };
        let got = min_distance_per_component(&dm, MinAxis::PerCol).unwrap();
        for j in 0..6 {
            let mut best = f64::MAX;
            for i in 0..4 {
                if m.get(i, j) < best {
                    best = m.get(i, j);
                }
            }
            assert_eq!(got[j], best);
        }

        let empty = DistanceMatrix {
            values: DenseMatrix::zeros(0, 0),
            signless: false,
            row_labels: vec![],
            col_labels: vec![],
        };
        assert_eq!(min_distance_per_component(&empty, MinAxis::PerCol), Err(LinalgError::EmptyMatrix));
    }

    fn nonzero_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            (u, v) in (2usize..8).prop_flat_map(|n| (nonzero_vec(n), nonzero_vec(n))),
            c in 0.01f64..100.0,
        ) {
            let d = cosine_distance(&u, &v).unwrap();
            prop_assert_eq!(d, cosine_distance(&v, &u).unwrap());
            let scaled: Vec<f64> = u.iter().map(|x| c * x).collect();
            prop_assert!((cosine_distance(&scaled, &v).unwrap() - d).abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&d));
        }

        #[test]
        fn signless_negation_exact(
            (u, v) in (2usize..8).prop_flat_map(|n| (nonzero_vec(n), nonzero_vec(n))),
        ) {
            let nu: Vec<f64> = u.iter().map(|x| -x).collect();
            let nv: Vec<f64> = v.iter().map(|x| -x).collect();
            let d = signless_distance(&u, &v).unwrap();
            prop_assert_eq!(d, signless_distance(&nu, &v).unwrap());
            prop_assert_eq!(d, signless_distance(&u, &nv).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
            let full = cosine_distance(&u, &v).unwrap();
            prop_assert!((d - full.min(2.0 - full)).abs() < 1e-12);
        }

        #[test]
        fn normalize_idempotent(seed in 0u64..1000) {
            let m = random_matrix(5, 4, seed);
            let once = normalize_rows(&m).unwrap();
            let twice = normalize_rows(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
