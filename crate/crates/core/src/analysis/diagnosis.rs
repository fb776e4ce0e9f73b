use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::welch_t_test;
use super::{AnalysisError, Result};
use crate::decomposition::{encode_vector, ComponentSet, Method};
use crate::dumpio::ResidualStreamDump;
use crate::linalg::norm;
use crate::prompts::TokenRole;

const DEGENERATE_TOP: f64 = 1e-12;

/// `R = Σ_{i=2..k} C_i / ((k − 1)·C_1)` over the `top_k` largest
/// coefficients, ties broken by component index. With `absolute` the
/// coefficients are ranked and summed as magnitudes, otherwise by signed
/// value.
pub fn compute_r(codes: &[f64], top_k: usize, absolute: bool) -> Result<f64> {
    if top_k < 2 || codes.len() < top_k {
        return Err(AnalysisError::InvalidTopK { top_k, k: codes.len() });
    }
    let vals: Vec<f64> = if absolute { codes.iter().map(|c| c.abs()).collect() } else { codes.to_vec() };
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let c1 = vals[idx[0]];
    if c1.abs() < DEGENERATE_TOP {
        return Err(AnalysisError::DegenerateTop);
    }
    let rest: f64 = idx[1..top_k].iter().map(|&i| vals[i]).sum();
    Ok(rest / ((top_k - 1) as f64 * c1))
}

/// Which residual the diagnosis encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosisTarget {
    /// Last-layer residual of the final separator.
    #[default]
    FinalSeparator,
    /// Last-layer residual of the first generated token, when the dump has one.
    GeneratedFirst,
}

impl DiagnosisTarget {
    fn role(self) -> TokenRole {
        match self {
            DiagnosisTarget::FinalSeparator => TokenRole::FinalSeparator,
            DiagnosisTarget::GeneratedFirst => TokenRole::GeneratedFirst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScore {
    pub prompt_id: u64,
    #[serde(rename = "R")]
    pub r: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub per_prompt: Vec<PromptScore>,
    /// `None` when the test could not run; `note` says why.
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub top_k: usize,
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// Prompt ids left out: unlabeled, or with a degenerate top coefficient.
    pub excluded: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Encodes each labeled prompt's target residual against `comp_a`, computes
/// R, and Welch-tests R between correct and incorrect prompts.
pub fn diagnose(
    dump: &ResidualStreamDump,
    comp_a: &ComponentSet,
    lambda: f64,
    top_k: usize,
    target: DiagnosisTarget,
) -> Result<DiagnosisResult> {
    if dump.hidden_dim != comp_a.d() {
        return Err(AnalysisError::MethodMismatch { d_s: dump.hidden_dim, d_a: comp_a.d() });
    }
    if top_k < 2 || top_k > comp_a.k() {
        return Err(AnalysisError::InvalidTopK { top_k, k: comp_a.k() });
    }
    if dump.prompts.iter().all(|p| p.correct.is_none()) {
        return Err(AnalysisError::MissingLabels);
    }
    let absolute = comp_a.method() == Method::Ica;
    let role = target.role();
    let offsets = dump.token_offsets();
    let scored: Vec<(u64, Option<PromptScore>)> = dump
        .prompts
        .par_iter()
        .enumerate()
        .map(|(p, prompt)| {
            let Some(correct) = prompt.correct else { return Ok((prompt.prompt_id, None)) };
            let pos = prompt
                .tokens
                .iter()
                .position(|t| t.role == role)
                .ok_or_else(|| AnalysisError::NoSuchRole(format!("{role:?}")))?;
            let h = dump.vector_f64(offsets[p] + pos, dump.n_layers);
            let n = norm(&h);
            if n == 0.0 {
                return Ok((prompt.prompt_id, None));
            }
            let unit: Vec<f64> = h.iter().map(|x| x / n).collect();
            let codes = encode_vector(&unit, comp_a, lambda)?;
            match compute_r(&codes, top_k, absolute) {
                Ok(r) => Ok((prompt.prompt_id, Some(PromptScore { prompt_id: prompt.prompt_id, r, correct }))),
                Err(AnalysisError::DegenerateTop) => Ok((prompt.prompt_id, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut per_prompt = Vec::new();
    let mut excluded = Vec::new();
    for (id, s) in scored {
        match s {
            Some(s) => per_prompt.push(s),
            None => excluded.push(id),
        }
    }
    let xs: Vec<f64> = per_prompt.iter().filter(|s| s.correct).map(|s| s.r).collect();
    let ys: Vec<f64> = per_prompt.iter().filter(|s| !s.correct).map(|s| s.r).collect();
    let (t_statistic, p_value, note) = if xs.is_empty() || ys.is_empty() {
        (None, None, Some("all labeled prompts are in one class".to_string()))
    } else {
        match welch_t_test(&xs, &ys) {
            Ok(w) => (Some(w.t), Some(w.p), None),
            Err(e @ (AnalysisError::TooFewSamples { .. } | AnalysisError::ZeroVariance)) => {
                (None, None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        }
    };
    Ok(DiagnosisResult {
        n_correct: xs.len(),
        n_incorrect: ys.len(),
        per_prompt,
        t_statistic,
        p_value,
        top_k,
        excluded,
        note,
    })
}
