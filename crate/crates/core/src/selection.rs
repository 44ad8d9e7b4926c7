//! BIC scoring of path points with trace degrees of freedom, model choice,
//! and the simulation metrics.

use nalgebra::DVector;

use crate::data::DistanceStack;
use crate::error::{NgkError, Result};
use crate::kernel::{self, ScaleVector};
use crate::linalg::SpdFactor;
use crate::path::{PathPoint, SolutionPath};

/// Fit summary of one scale vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScore {
    /// Unnormalized residual sum of squares.
    pub rss: f64,
    /// Trace of the smoother `K (lambda0 I + K)^{-1}`.
    pub df: f64,
    /// `log(rss) + df log(n) / n`; `-inf` on exact interpolation.
    pub bic: f64,
}

/// Smoother fit `f = K (lambda0 I + K)^{-1} y` together with its trace.
pub fn smoother_fit(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64) -> Result<(DVector<f64>, f64)> {
    if !(lambda0 > 0.0) {
        return Err(NgkError::InvalidInput(format!(
            "smoothing parameter must be positive, got {lambda0}"
        )));
    }
    let k = kernel::kernel_matrix(stack, xi)?;
    let n = k.n();
    let mut delta = k.matrix().clone();
    for i in 0..n {
        delta[(i, i)] += lambda0;
    }
    let factor = SpdFactor::new(&delta)?;
    let beta = factor.solve(y);
    // S = K D^{-1} = I - lambda0 D^{-1}
    let fitted = y - &beta * lambda0;
    let df = n as f64 - lambda0 * factor.inverse().trace();
    Ok((fitted, df.clamp(0.0, n as f64)))
}

pub fn score_point(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64) -> Result<PointScore> {
    let (fitted, df) = smoother_fit(stack, xi, y, lambda0)?;
    let n = y.len() as f64;
    let rss = (y - fitted).norm_squared();
    let bic = if rss > 0.0 {
        rss.ln() + df * n.ln() / n
    } else {
        log::warn!("zero residual sum of squares; BIC set to -inf");
        f64::NEG_INFINITY
    };
    Ok(PointScore { rss, df, bic })
}

#[derive(Debug, Clone)]
pub struct SelectionCriterion {
    pub scores: Vec<PointScore>,
    pub chosen_index: usize,
    /// Minimum sits at the smallest penalty: the curve never turned up.
    pub flat_curve: bool,
}

/// Score every path point and choose the BIC minimizer (ties go to the
/// larger penalty).
pub fn select_min_bic<'p>(
    path: &'p SolutionPath,
    stack: &DistanceStack,
    y: &DVector<f64>,
    lambda0: f64,
) -> Result<(&'p PathPoint, SelectionCriterion)> {
    if path.points.is_empty() {
        return Err(NgkError::InvalidInput("cannot select from an empty path".into()));
    }
    let scores: Vec<PointScore> = path
        .points
        .iter()
        .map(|pt| score_point(stack, &pt.xi, y, lambda0))
        .collect::<Result<_>>()?;
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.bic < scores[chosen].bic {
            chosen = i;
        }
    }
    let flat_curve = scores.len() > 1 && chosen == scores.len() - 1;
    if flat_curve {
        log::warn!("BIC minimized at the last grid point; the criterion may be flat");
    }
    Ok((
        &path.points[chosen],
        SelectionCriterion {
            scores,
            chosen_index: chosen,
            flat_curve,
        },
    ))
}

/// How one NGK run turns a path into a selected set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    MinBic,
    /// The first `w` predictors to enter along the path.
    Window(usize),
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub active: Vec<usize>,
    /// Scales used for refitting: the chosen point for min-BIC, the first
    /// point containing the whole window otherwise.
    pub xi: ScaleVector,
    pub point_index: usize,
    pub criterion: Option<SelectionCriterion>,
}

impl SelectionRule {
    pub fn apply(&self, path: &SolutionPath, stack: &DistanceStack, y: &DVector<f64>, lambda0: f64) -> Result<Selection> {
        match *self {
            SelectionRule::MinBic => {
                let (pt, crit) = select_min_bic(path, stack, y, lambda0)?;
                Ok(Selection {
                    active: pt.active_set.clone(),
                    xi: pt.xi.clone(),
                    point_index: crit.chosen_index,
                    criterion: Some(crit),
                })
            }
            SelectionRule::Window(w) => {
                if path.points.is_empty() {
                    return Err(NgkError::InvalidInput("cannot select from an empty path".into()));
                }
                let mut active: Vec<usize> = path.entry_order().into_iter().take(w).collect();
                active.sort_unstable();
                let idx = path
                    .points
                    .iter()
                    .position(|pt| active.iter().all(|j| pt.xi.get(*j) > 0.0))
                    .unwrap_or(path.points.len() - 1);
                let mut xi = path.points[idx].xi.as_slice().to_vec();
                for (j, v) in xi.iter_mut().enumerate() {
                    if !active.contains(&j) {
                        *v = 0.0;
                    }
                }
                Ok(Selection {
                    active,
                    xi: ScaleVector::new(xi)?,
                    point_index: idx,
                    criterion: None,
                })
            }
        }
    }
}

/// Per-run evaluation statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub model_size: usize,
    /// `sum (y_i - f_i)^2 / n`.
    pub rss_n: f64,
    /// `sum (f_i - fhat_i)^2 / n`, when the true function is known.
    pub se: Option<f64>,
}

/// False-positive/negative rates of a selected set against the truth.
pub fn selection_rates(selected: &[usize], truth: &[usize], p: usize) -> (f64, f64) {
    let mut sel = vec![false; p];
    for &j in selected {
        sel[j] = true;
    }
    let mut tru = vec![false; p];
    for &j in truth {
        tru[j] = true;
    }
    let (mut fp, mut tn, mut fneg, mut tp) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..p {
        match (sel[j], tru[j]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    (ratio(fp, tn), ratio(fneg, tp))
}

pub fn compute_metrics(
    xi: &ScaleVector,
    truth_active: &[usize],
    f_true: Option<&DVector<f64>>,
    stack: &DistanceStack,
    y: &DVector<f64>,
    lambda0: f64,
) -> Result<Metrics> {
    let p = stack.p();
    if let Some(&bad) = truth_active.iter().find(|&&j| j >= p) {
        return Err(NgkError::IndexOutOfRange { index: bad, p });
    }
    let selected = xi.active_set();
    let (fp_rate, fn_rate) = selection_rates(&selected, truth_active, p);
    let (fitted, _) = smoother_fit(stack, xi, y, lambda0)?;
    let n = y.len() as f64;
    let rss_n = (y - &fitted).norm_squared() / n;
    let se = match f_true {
        Some(f) => {
            if f.len() != y.len() {
                return Err(NgkError::DimensionMismatch {
                    expected: y.len(),
                    found: f.len(),
                });
            }
            Some((f - &fitted).norm_squared() / n)
        }
        None => None,
    };
    Ok(Metrics {
        fp_rate,
        fn_rate,
        model_size: selected.len(),
        rss_n,
        se,
    })
}
