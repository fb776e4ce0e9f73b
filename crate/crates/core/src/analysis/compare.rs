use serde::{Deserialize, Serialize};

use super::alignment::AlignmentTrace;
use super::stats::spearman;
use super::{AnalysisError, Result};
use crate::decomposition::{ComponentSet, Method};
use crate::linalg::{min_distance_per_component, pairwise_distances, DistanceMatrix, MinAxis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// Rows index separator components, columns answer components.
    pub distances: DistanceMatrix,
    /// For each answer component, its distance to the nearest separator
    /// component.
    pub minima: Vec<f64>,
}

/// Distances between every separator and answer component. Sign is ignored
/// whenever either set comes from ICA, whose components carry no sign.
pub fn component_distance_report(comp_s: &ComponentSet, comp_a: &ComponentSet) -> Result<DistanceReport> {
    if comp_s.d() != comp_a.d() {
        return Err(AnalysisError::MethodMismatch { d_s: comp_s.d(), d_a: comp_a.d() });
    }
    let signless = comp_s.method() == Method::Ica || comp_a.method() == Method::Ica;
    let distances = pairwise_distances(comp_s.components(), comp_a.components(), signless)?;
    let minima = min_distance_per_component(&distances, MinAxis::PerCol)?;
    Ok(DistanceReport { distances, minima })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePairs {
    pub layer: usize,
    /// `(D_min, coefficient)` per answer component.
    pub pairs: Vec<(f64, f64)>,
    pub rank_correlation: Option<f64>,
}

/// Pairs each answer component's nearest-separator distance with its
/// coefficient at `layer` of the trace (the last layer by default).
pub fn distance_vs_score(
    comp_s: &ComponentSet,
    comp_a: &ComponentSet,
    trace: &AlignmentTrace,
    layer: Option<usize>,
) -> Result<ScorePairs> {
    let report = component_distance_report(comp_s, comp_a)?;
    let last = trace.layers - 1;
    let layer = layer.unwrap_or(last);
    if layer > last {
        return Err(AnalysisError::BadLayerRange { start: layer, end: layer, max: last });
    }
    if trace.k != comp_a.k() {
        return Err(AnalysisError::MethodMismatch { d_s: trace.k, d_a: comp_a.k() });
    }
    let scores = trace.coefficients.row(layer);
    let pairs: Vec<(f64, f64)> = report.minima.iter().copied().zip(scores.iter().copied()).collect();
    let (ds, cs): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok(ScorePairs { layer, rank_correlation: spearman(&ds, &cs), pairs })
}
