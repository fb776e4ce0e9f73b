use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::dumpio::ResidualStreamDump;
use crate::linalg::{normalize_rows, DenseMatrix};
use crate::prompts::TokenRole;

/// Inclusive range of stored layers; layer 0 is the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRange {
    pub start: usize,
    pub end: usize,
}

impl LayerRange {
    pub fn single(layer: usize) -> Self {
        Self { start: layer, end: layer }
    }

    pub fn all(dump: &ResidualStreamDump) -> Self {
        Self { start: 0, end: dump.n_layers }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for LayerRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for LayerRange {
    type Err = String;

    /// Accepts `5` or `2..8` (inclusive).
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad layer {t:?}: {e}"));
        match s.split_once("..") {
            Some((a, b)) => {
                let b = b.strip_prefix('=').unwrap_or(b);
                let r = Self { start: parse(a)?, end: parse(b)? };
                if r.start > r.end {
                    return Err(format!("empty layer range {s:?}"));
                }
                Ok(r)
            }
            None => parse(s).map(Self::single),
        }
    }
}

/// Stacks the unit-normalized residuals of every token with exactly `role`,
/// prompt by prompt, token by token, layer by layer.
pub fn collect_role_matrix(
    dump: &ResidualStreamDump,
    role: TokenRole,
    layers: Option<LayerRange>,
) -> Result<DenseMatrix> {
    let range = layers.unwrap_or_else(|| LayerRange::all(dump));
    if range.start > range.end || range.end > dump.n_layers {
        return Err(AnalysisError::BadLayerRange { start: range.start, end: range.end, max: dump.n_layers });
    }
    let d = dump.hidden_dim;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut global = 0;
    for p in &dump.prompts {
        for tok in &p.tokens {
            if tok.role == role {
                for l in range.start..=range.end {
                    data.extend(dump.vector(global, l).iter().map(|&v| f64::from(v)));
                    rows += 1;
                }
            }
            global += 1;
        }
    }
    if rows == 0 {
        return Err(AnalysisError::NoSuchRole(format!("{role:?}")));
    }
    Ok(normalize_rows(&DenseMatrix::new(rows, d, data)?)?)
}
