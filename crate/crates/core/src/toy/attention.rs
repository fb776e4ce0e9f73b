//! Single-head causal self-attention in two forms.
//!
//! *Exact*: `A_ij = (K h_i)ᵀ(Q h_j)` and `a_j = (1/√d) Σ_{i≤j} softmax_i(A_ij) V h_i`.
//!
//! *Constant*: every score is replaced by a constant chosen by the role of
//! token `i` (queries α, separators β, answers γ). The output at the last
//! token then groups into three sums,
//! `a = Σ_g (e^{s_g} / M) Σ_{i∈g} V h_i` with `M = √d Σ_g N_g e^{s_g}`.

use serde::{Deserialize, Serialize};

use super::{Result, ToyError};
use crate::linalg::{dot, DenseMatrix};
use crate::prompts::TokenRole;

/// Attention scores assigned by token role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleScores {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RoleScores {
    pub fn uniform(score: f64) -> Self {
        Self { alpha: score, beta: score, gamma: score }
    }

    /// Score group of a role: 0 = query (α), 1 = separator (β), 2 = answer (γ).
    pub fn group(role: TokenRole) -> Result<usize> {
        match role {
            TokenRole::Query | TokenRole::TestQuery => Ok(0),
            TokenRole::Separator | TokenRole::FinalSeparator => Ok(1),
            TokenRole::Answer => Ok(2),
            TokenRole::GeneratedFirst => Err(ToyError::RoleMismatch(format!("{role:?} has no attention constant"))),
        }
    }

    fn as_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn score(self, role: TokenRole) -> Result<f64> {
        Ok(self.as_array()[Self::group(role)?])
    }
}

/// Whether the attending token is part of its own softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelfTerm {
    #[default]
    Include,
    /// Normalize over the preceding tokens only.
    Exclude,
}

fn value_rows(h: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(v, h.cols())?;
    Ok(h.matmul(&v.transpose())?)
}

fn check_square(m: &DenseMatrix, d: usize) -> Result<()> {
    if m.rows() != d || m.cols() != d {
        return Err(ToyError::DimensionMismatch { expected: d, found: m.rows().max(m.cols()) });
    }
    Ok(())
}

/// Causal attention output at every position (`T × d`).
pub fn attention_forward_exact(
    h_prev: &DenseMatrix,
    k: &DenseMatrix,
    q: &DenseMatrix,
    v: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (t, d) = h_prev.shape();
    check_square(k, d)?;
    check_square(q, d)?;
    let keys = value_rows(h_prev, k)?;
    let queries = value_rows(h_prev, q)?;
    let vals = value_rows(h_prev, v)?;
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = DenseMatrix::zeros(t, d);
    let mut weights = Vec::with_capacity(t);
    for j in 0..t {
        weights.clear();
        weights.extend((0..=j).map(|i| dot(keys.row(i), queries.row(j))));
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        weights.iter_mut().for_each(|w| *w = (*w - max).exp());
        let z: f64 = weights.iter().sum();
        let row = out.row_mut(j);
        for (i, w) in weights.iter().enumerate() {
            let c = scale * w / z;
            for (o, vi) in row.iter_mut().zip(vals.row(i)) {
                *o += c * vi;
            }
        }
    }
    Ok(out)
}

fn check_roles(h_prev: &DenseMatrix, roles: &[TokenRole]) -> Result<()> {
    if roles.len() != h_prev.rows() {
        return Err(ToyError::RoleMismatch(format!("{} roles for {} tokens", roles.len(), h_prev.rows())));
    }
    if roles.is_empty() {
        return Err(ToyError::RoleMismatch("no tokens".into()));
    }
    Ok(())
}

/// Per-token attention weights of the last token under role-constant
/// scores, `e^{s_i} / M`. With [`SelfTerm::Exclude`] the last token gets
/// weight 0 and is left out of `M`.
pub fn constant_weights(roles: &[TokenRole], scores: RoleScores, d: usize, self_term: SelfTerm) -> Result<Vec<f64>> {
    let n = roles.len();
    let attended = match self_term {
        SelfTerm::Include => n,
        SelfTerm::Exclude => n.saturating_sub(1),
    };
    let s = scores.as_array();
    let groups: Vec<usize> = roles.iter().map(|&r| RoleScores::group(r)).collect::<Result<_>>()?;
    let mut counts = [0usize; 3];
    groups[..attended].iter().for_each(|&g| counts[g] += 1);
    let present_max = (0..3).filter(|&g| counts[g] > 0).map(|g| s[g]).fold(f64::NEG_INFINITY, f64::max);
    let m: f64 = (d as f64).sqrt() * (0..3).map(|g| counts[g] as f64 * (s[g] - present_max).exp()).sum::<f64>();
    Ok(groups
        .iter()
        .enumerate()
        .map(|(i, &g)| if i < attended { (s[g] - present_max).exp() / m } else { 0.0 })
        .collect())
}

/// Output at the last token, computed in grouped form: one value sum per
/// role group, each scaled by `e^{score} / M`.
pub fn attention_forward_constant(
    h_prev: &DenseMatrix,
    roles: &[TokenRole],
    scores: RoleScores,
    v: &DenseMatrix,
    self_term: SelfTerm,
) -> Result<Vec<f64>> {
    check_roles(h_prev, roles)?;
    let d = h_prev.cols();
    check_square(v, d)?;
    let attended = match self_term {
        SelfTerm::Include => roles.len(),
        SelfTerm::Exclude => roles.len() - 1,
    };
    let s = scores.as_array();
    let mut counts = [0usize; 3];
    let mut sums = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    for i in 0..attended {
        let g = RoleScores::group(roles[i])?;
        counts[g] += 1;
        sums[g].iter_mut().zip(h_prev.row(i)).for_each(|(a, b)| *a += b);
    }
    let present_max = (0..3).filter(|&g| counts[g] > 0).map(|g| s[g]).fold(f64::NEG_INFINITY, f64::max);
    if !present_max.is_finite() {
        return Ok(vec![0.0; d]);
    }
    let m = (d as f64).sqrt() * (0..3).map(|g| counts[g] as f64 * (s[g] - present_max).exp()).sum::<f64>();
    let mut grouped = vec![0.0; d];
    for g in 0..3 {
        if counts[g] == 0 {
            continue;
        }
        let w = (s[g] - present_max).exp() / m;
        grouped.iter_mut().zip(&sums[g]).for_each(|(o, x)| *o += w * x);
    }
    Ok(v.matvec(&grouped)?)
}

/// Role-constant causal attention at every position (`T × d`), used when
/// running a model in constant mode.
pub fn attention_constant_causal(
    h_prev: &DenseMatrix,
    roles: &[TokenRole],
    scores: RoleScores,
    v: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_roles(h_prev, roles)?;
    let (t, d) = h_prev.shape();
    check_square(v, d)?;
    let vals = value_rows(h_prev, v)?;
    let s = scores.as_array();
    let s_max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - s_max).exp()).collect();
    let sqrt_d = (d as f64).sqrt();
    let mut counts = [0usize; 3];
    let mut sums = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut out = DenseMatrix::zeros(t, d);
    for j in 0..t {
        let g = RoleScores::group(roles[j])?;
        counts[g] += 1;
        sums[g].iter_mut().zip(vals.row(j)).for_each(|(a, b)| *a += b);
        let m = sqrt_d * (0..3).map(|g| counts[g] as f64 * e[g]).sum::<f64>();
        let row = out.row_mut(j);
        for g in 0..3 {
            if counts[g] == 0 {
                continue;
            }
            let w = e[g] / m;
            row.iter_mut().zip(&sums[g]).for_each(|(o, x)| *o += w * x);
        }
    }
    Ok(out)
}
