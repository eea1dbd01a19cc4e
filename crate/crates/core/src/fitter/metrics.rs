use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::TriMesh;

/// Samples of the cumulative error distribution on `[0, threshold]`.
pub const CED_SAMPLES: usize = 1001;

/// Per-vertex Euclidean distance divided by the inter-ocular distance.
pub fn normalized_dense_error(fitted: &TriMesh, truth: &TriMesh, interocular: f64) -> Result<Vec<f64>> {
    check_len("fitted mesh vertices", truth.n_vertices(), fitted.n_vertices())?;
    if !(interocular.is_finite() && interocular > 0.0) {
        return Err(Error::invalid(format!("inter-ocular distance must be positive, got {interocular}")));
    }
    Ok(fitted
        .vertices()
        .iter()
        .zip(truth.vertices())
        .map(|(a, b)| (a - b).norm() / interocular)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CedSummary {
    pub auc: f64,
    pub failure_rate: f64,
    pub threshold: f64,
    /// `(x, fraction of errors ≤ x)` on a uniform grid over `[0, threshold]`.
    pub curve: Vec<(f64, f64)>,
}

/// Area under the cumulative error distribution up to `threshold`,
/// normalised to `[0, 1]` (trapezoidal rule), and the fraction of errors above it.
pub fn ced_auc(errors: &[f64], threshold: f64) -> Result<CedSummary> {
    if errors.is_empty() {
        return Err(Error::invalid("cannot summarise an empty error list"));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::NonFinite("error list contains NaN".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let curve: Vec<(f64, f64)> = (0..CED_SAMPLES)
        .map(|i| {
            let x = threshold * i as f64 / (CED_SAMPLES - 1) as f64;
            let count = sorted.partition_point(|&e| e <= x);
            (x, count as f64 / n)
        })
        .collect();
    let intervals = (CED_SAMPLES - 1) as f64;
    let auc = curve.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1)).sum::<f64>() / intervals;
    let failures = sorted.len() - sorted.partition_point(|&e| e <= threshold);
    Ok(CedSummary {
        auc,
        failure_rate: failures as f64 / n,
        threshold,
        curve,
    })
}
