//! Marginal independence screening for ultrahigh-dimensional designs.

use crate::data::Dataset;
use crate::error::{NgkError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    /// Predictor indices by ascending score.
    pub ranked: Vec<usize>,
    /// The first `keep` of `ranked`, in rank order.
    pub kept: Vec<usize>,
    /// Score `|y|^2 - (x_j^T y)^2` per predictor, in column order.
    pub scores: Vec<f64>,
}

/// Rank predictors by `|y|^2 - (x_j^T y)^2` and keep the `keep` smallest.
/// Ties go to the lower index.
pub fn nis_screen(ds: &Dataset, keep: usize) -> Result<ScreenResult> {
    if keep == 0 {
        return Err(NgkError::InvalidInput("screen count must be at least 1".into()));
    }
    let y = ds.y();
    let yy = y.norm_squared();
    let scores: Vec<f64> = ds
        .x()
        .column_iter()
        .map(|col| {
            let c = col.dot(y);
            yy - c * c
        })
        .collect();
    let mut ranked: Vec<usize> = (0..scores.len()).collect();
    ranked.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let kept = ranked[..keep.min(ranked.len())].to_vec();
    Ok(ScreenResult { ranked, kept, scores })
}
