use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::TriangleMesh;

/// Total triangle area in cm² (mesh coordinates in meters).
pub fn leaf_area(mesh: &TriangleMesh) -> f64 {
    mesh.area() * 1e4
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafAreaReport {
    pub reference_area: f64,
    pub estimated_area: f64,
    pub percent_diff: f64,
    pub absolute_percent_diff: f64,
}

pub fn completeness_report(reference_area: f64, estimated_area: f64) -> Result<LeafAreaReport, EvalError> {
    if !(reference_area > 0.0) {
        return Err(EvalError::NonPositiveReference(reference_area));
    }
    let percent_diff = 100.0 * (estimated_area - reference_area) / reference_area;
    Ok(LeafAreaReport {
        reference_area,
        estimated_area,
        percent_diff,
        absolute_percent_diff: percent_diff.abs(),
    })
}

/// Mean of absolute percent differences.
pub fn aggregate_abs_percent(diffs: &[f64]) -> Option<f64> {
    if diffs.is_empty() {
        None
    } else {
        Some(diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64)
    }
}
