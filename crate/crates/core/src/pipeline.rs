//! One complete NGK run: optional screening, smoothing-parameter estimate,
//! solution path and model choice.

use nalgebra::DVector;

use crate::data::{build_distance_stack, Dataset, DistanceStack, KernelKind};
use crate::error::Result;
use crate::kernel::{self, Lambda0Estimate, ScaleVector};
use crate::path::{self, PathConfig, SolutionPath};
use crate::screening::{self, ScreenResult};
use crate::selection::{Selection, SelectionRule};

#[derive(Debug, Clone, PartialEq)]
pub struct NgkConfig {
    pub kind: KernelKind,
    /// Uniform scale used to estimate the smoothing parameter; `1/p` when unset.
    pub rho: Option<f64>,
    pub path: PathConfig,
    pub rule: SelectionRule,
    /// Keep this many predictors after marginal screening.
    pub screen: Option<usize>,
}

impl NgkConfig {
    pub fn new(kind: KernelKind) -> Self {
        NgkConfig {
            kind,
            rho: None,
            path: PathConfig::default(),
            rule: SelectionRule::MinBic,
            screen: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NgkFit {
    /// Original indices of the fitted columns; local index `k` is column `columns[k]`.
    pub columns: Vec<usize>,
    pub screen: Option<ScreenResult>,
    pub stack: DistanceStack,
    pub lambda0: Lambda0Estimate,
    pub path: SolutionPath,
    /// Selection in local indices.
    pub selection: Selection,
    /// Selected original column indices, ascending.
    pub selected: Vec<usize>,
    /// Selected scales expanded to the full predictor count.
    pub xi_full: ScaleVector,
}

/// Screen (if configured) and build the distance stack for the kept columns.
pub fn prepare_stack(ds: &Dataset, cfg: &NgkConfig) -> Result<(Vec<usize>, Option<ScreenResult>, DistanceStack)> {
    match cfg.screen {
        Some(keep) if keep < ds.p() => {
            let sr = screening::nis_screen(ds, keep)?;
            let mut cols = sr.kept.clone();
            cols.sort_unstable();
            let sub = ds.select_columns(&cols)?;
            Ok((cols, Some(sr), build_distance_stack(&sub, cfg.kind)))
        }
        _ => Ok(((0..ds.p()).collect(), None, build_distance_stack(ds, cfg.kind))),
    }
}

pub fn default_rho(p: usize) -> f64 {
    1.0 / p.max(1) as f64
}

pub fn fit_ngk(ds: &Dataset, cfg: &NgkConfig) -> Result<NgkFit> {
    cfg.path.validate()?;
    let (columns, screen, stack) = prepare_stack(ds, cfg)?;
    let rho = cfg.rho.unwrap_or_else(|| default_rho(stack.p()));
    let est = kernel::estimate_lambda0(&stack, ds.y(), rho)?;
    if est.at_boundary {
        log::warn!("smoothing parameter estimate {:e} sits on a search bound", est.fit.lambda0);
    }
    let alpha = est.fit.alpha.clone();
    let lambda0 = est.fit.lambda0;
    finish(ds.y(), ds.p(), columns, screen, stack, est, &alpha, lambda0, cfg)
}

/// NGK with a supplied initial coefficient vector and smoothing parameter,
/// on an already prepared stack.
pub fn fit_ngk_fixed(
    y: &DVector<f64>,
    p_total: usize,
    columns: &[usize],
    stack: &DistanceStack,
    alpha: &DVector<f64>,
    lambda0: f64,
    cfg: &NgkConfig,
) -> Result<(SolutionPath, Selection, Vec<usize>)> {
    let path = path::solve_path(stack, y, alpha, lambda0, &cfg.path)?;
    let selection = cfg.rule.apply(&path, stack, y, lambda0)?;
    let selected = map_back(&selection.active, columns);
    debug_assert!(selected.iter().all(|&j| j < p_total));
    Ok((path, selection, selected))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    y: &DVector<f64>,
    p_total: usize,
    columns: Vec<usize>,
    screen: Option<ScreenResult>,
    stack: DistanceStack,
    est: Lambda0Estimate,
    alpha: &DVector<f64>,
    lambda0: f64,
    cfg: &NgkConfig,
) -> Result<NgkFit> {
    let path = path::solve_path(&stack, y, alpha, lambda0, &cfg.path)?;
    let selection = cfg.rule.apply(&path, &stack, y, lambda0)?;
    let selected = map_back(&selection.active, &columns);
    let xi_full = expand(&selection.xi, &columns, p_total)?;
    Ok(NgkFit {
        columns,
        screen,
        stack,
        lambda0: est,
        path,
        selection,
        selected,
        xi_full,
    })
}

fn map_back(local: &[usize], columns: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = local.iter().map(|&k| columns[k]).collect();
    out.sort_unstable();
    out
}

/// Scatter local scales into a full-length vector.
pub fn expand(xi: &ScaleVector, columns: &[usize], p_total: usize) -> Result<ScaleVector> {
    let mut full = vec![0.0; p_total];
    for (k, &c) in columns.iter().enumerate() {
        full[c] = xi.get(k);
    }
    ScaleVector::new(full)
}
