//! Regularization path of the kernel scales.
//!
//! The initial coefficient vector `alpha` stays fixed along the whole path.
//! With `y~ = y - (lambda0 / 2) alpha`, each coordinate step minimizes the
//! criterion after linearizing `K` in the single direction `xi_j`:
//!
//! ```text
//! r_j  = y~ - K alpha + xi_j z_j,   z_j = K'_j alpha
//! xi_j <- max(0, (z_j^T r_j - n lambda) / |z_j|^2)
//! ```
//!
//! For the linear kernel the linearization is exact and the sweep is plain
//! coordinate descent on a nonnegative garrote.

use nalgebra::{DMatrix, DVector};

use crate::data::{DistanceStack, KernelKind};
use crate::error::{NgkError, Result};
use crate::kernel::{self, ScaleVector};

/// Denominators `|z_j|^2` below this leave the coordinate untouched.
pub const INERT_DENOMINATOR: f64 = 1e-14;

/// Floor applied when the starting penalty comes out nonpositive.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    /// Number of geometric grid points (ignored when `lambdas` is set).
    pub grid_size: usize,
    /// Smallest penalty as a fraction of the starting penalty.
    pub lambda_min_ratio: f64,
    /// Explicit strictly decreasing penalty grid.
    pub lambdas: Option<Vec<f64>>,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest coordinate change in a sweep.
    pub tol: f64,
    /// Refit `alpha = (lambda0 I + K(xi))^{-1} y` after each grid point
    /// instead of keeping the initial estimate.
    pub refit_alpha: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            grid_size: 50,
            lambda_min_ratio: 1e-3,
            lambdas: None,
            max_sweeps: 500,
            tol: 1e-6,
            refit_alpha: false,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = &self.lambdas {
            if l.is_empty() {
                return Err(NgkError::InvalidInput("explicit lambda grid is empty".into()));
            }
            if l.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(NgkError::InvalidInput("lambda values must be positive".into()));
            }
            if l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(NgkError::InvalidInput(
                    "explicit lambda grid must be strictly decreasing".into(),
                ));
            }
        } else {
            if self.grid_size < 2 {
                return Err(NgkError::InvalidInput("grid_size must be at least 2".into()));
            }
            if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
                return Err(NgkError::InvalidInput(
                    "lambda_min_ratio must lie in (0, 1)".into(),
                ));
            }
        }
        if !(self.tol > 0.0) {
            return Err(NgkError::InvalidInput("tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(NgkError::InvalidInput("max_sweeps must be positive".into()));
        }
        Ok(())
    }

    /// Penalty grid for a given starting penalty.
    pub fn grid(&self, lambda_max: f64) -> Vec<f64> {
        match &self.lambdas {
            Some(l) => l.clone(),
            None => {
                let m = self.grid_size;
                let step = self.lambda_min_ratio.ln() / (m - 1) as f64;
                (0..m).map(|k| lambda_max * (step * k as f64).exp()).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    pub xi: ScaleVector,
    pub sweeps: usize,
    pub converged: bool,
    /// Criterion minimized by the sweeps: the penalized least-squares
    /// objective at the fixed `alpha` plus `n lambda sum(xi)`.
    pub objective: f64,
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub points: Vec<PathPoint>,
    pub kind: KernelKind,
    /// Modified response `y - (lambda0 / 2) alpha`.
    pub y_tilde: DVector<f64>,
    pub alpha_init: DVector<f64>,
    pub lambda0: f64,
    pub lambda_start: InitialLambda,
}

impl SolutionPath {
    pub fn p(&self) -> usize {
        self.points.first().map_or(0, |pt| pt.xi.len())
    }

    pub fn n_unconverged(&self) -> usize {
        self.points.iter().filter(|pt| !pt.converged).count()
    }

    /// Order in which predictors first become active along the path; ties
    /// within a grid point are broken by larger scale, then by index.
    pub fn entry_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.p()];
        let mut order = Vec::new();
        for pt in &self.points {
            let mut fresh: Vec<usize> = pt.active_set.iter().copied().filter(|&j| !seen[j]).collect();
            fresh.sort_by(|&a, &b| pt.xi.get(b).total_cmp(&pt.xi.get(a)).then(a.cmp(&b)));
            for j in fresh {
                seen[j] = true;
                order.push(j);
            }
        }
        order
    }
}

pub fn modified_response(y: &DVector<f64>, alpha: &DVector<f64>, lambda0: f64) -> DVector<f64> {
    y - alpha * (0.5 * lambda0)
}

/// Starting penalty, at and above which every scale stays at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialLambda {
    /// Penalty actually used (floored at `LAMBDA_FLOOR`).
    pub value: f64,
    /// Unfloored maximum projection.
    pub raw: f64,
    pub clamped: bool,
}

/// `max_j n^{-1} (y~ - K(0) alpha)^T (K'_j(0) alpha)`.
pub fn initial_lambda(stack: &DistanceStack, y: &DVector<f64>, alpha: &DVector<f64>, lambda0: f64) -> Result<InitialLambda> {
    let state = CoordinateSolver::new(stack, y, alpha, lambda0)?;
    let resid = state.residual();
    let n = stack.n() as f64;
    let raw = (0..stack.p())
        .map(|j| resid.dot(&state.direction(j)) / n)
        .fold(f64::NEG_INFINITY, f64::max);
    let clamped = !(raw > LAMBDA_FLOOR);
    if clamped {
        log::warn!("starting penalty {raw:e} is not positive; flooring at {LAMBDA_FLOOR:e}");
    }
    Ok(InitialLambda {
        value: if clamped { LAMBDA_FLOOR } else { raw },
        raw,
        clamped,
    })
}

/// Coordinate-descent state for fixed `alpha`: current scales, the kernel
/// exponent `sum_j xi_j D^j`, the kernel and `K alpha`.
#[derive(Debug, Clone)]
pub struct CoordinateSolver<'a> {
    stack: &'a DistanceStack,
    y: DVector<f64>,
    alpha: DVector<f64>,
    y_tilde: DVector<f64>,
    lambda0: f64,
    xi: Vec<f64>,
    exponent: DMatrix<f64>,
    k: DMatrix<f64>,
    k_alpha: DVector<f64>,
}

impl<'a> CoordinateSolver<'a> {
    /// Solver positioned at `xi = 0`.
    pub fn new(stack: &'a DistanceStack, y: &DVector<f64>, alpha: &DVector<f64>, lambda0: f64) -> Result<Self> {
        let n = stack.n();
        for len in [y.len(), alpha.len()] {
            if len != n {
                return Err(NgkError::DimensionMismatch { expected: n, found: len });
            }
        }
        let mut s = CoordinateSolver {
            stack,
            y: y.clone(),
            alpha: alpha.clone(),
            y_tilde: modified_response(y, alpha, lambda0),
            lambda0,
            xi: vec![0.0; stack.p()],
            exponent: DMatrix::zeros(n, n),
            k: DMatrix::zeros(n, n),
            k_alpha: DVector::zeros(n),
        };
        s.rebuild_kernel();
        Ok(s)
    }

    pub fn set_xi(&mut self, xi: &ScaleVector) -> Result<()> {
        if xi.len() != self.stack.p() {
            return Err(NgkError::DimensionMismatch {
                expected: self.stack.p(),
                found: xi.len(),
            });
        }
        self.xi = xi.as_slice().to_vec();
        self.exponent = self.stack.weighted_sum(&self.xi);
        self.rebuild_kernel();
        Ok(())
    }

    /// Replace the fixed coefficient vector (one-step refit variant).
    pub fn set_alpha(&mut self, alpha: &DVector<f64>) {
        self.alpha = alpha.clone();
        self.y_tilde = modified_response(&self.y, alpha, self.lambda0);
        self.k_alpha = &self.k * &self.alpha;
    }

    fn rebuild_kernel(&mut self) {
        self.k = match self.stack.kind() {
            KernelKind::Gaussian => self.exponent.map(f64::exp),
            KernelKind::Linear => self.exponent.clone(),
        };
        self.k_alpha = &self.k * &self.alpha;
    }

    pub fn xi(&self) -> ScaleVector {
        // coordinates are only ever set through the positive part
        ScaleVector::new(self.xi.clone()).expect("scales stay nonnegative")
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn y_tilde(&self) -> &DVector<f64> {
        &self.y_tilde
    }

    /// `y~ - K alpha`.
    pub fn residual(&self) -> DVector<f64> {
        &self.y_tilde - &self.k_alpha
    }

    /// `z_j = K'_j alpha` at the current scales.
    pub fn direction(&self, j: usize) -> DVector<f64> {
        let d = self.stack.matrix(j);
        match self.stack.kind() {
            KernelKind::Linear => d * &self.alpha,
            KernelKind::Gaussian => {
                let n = self.alpha.len();
                let mut z = DVector::zeros(n);
                for c in 0..n {
                    let a = self.alpha[c];
                    let (kc, dc) = (self.k.column(c), d.column(c));
                    for r in 0..n {
                        z[r] += kc[r] * dc[r] * a;
                    }
                }
                z
            }
        }
    }

    /// Proposed value for coordinate `j` at penalty `lambda`, without moving.
    pub fn proposal(&self, j: usize, lambda: f64) -> f64 {
        let z = self.direction(j);
        let denom = z.norm_squared();
        if denom < INERT_DENOMINATOR {
            return self.xi[j];
        }
        let n = self.stack.n() as f64;
        let r = self.residual() + &z * self.xi[j];
        let score = z.dot(&r);
        // rounding at the starting penalty must not admit a coordinate
        let excess = score - n * lambda;
        if excess <= 1e-12 * score.abs().max(n * lambda) {
            return 0.0;
        }
        excess / denom
    }

    /// Move coordinate `j` to `value`, updating the kernel incrementally.
    pub fn set_coordinate(&mut self, j: usize, value: f64) {
        let delta = value - self.xi[j];
        if delta == 0.0 {
            return;
        }
        self.xi[j] = value;
        let d = self.stack.matrix(j);
        self.exponent.zip_apply(d, |a, b| *a += delta * b);
        match self.stack.kind() {
            KernelKind::Linear => self.k.zip_apply(d, |a, b| *a += delta * b),
            KernelKind::Gaussian => {
                // the exponent is symmetric: exponentiate one triangle
                let n = self.k.nrows();
                for c in 0..n {
                    for r in 0..=c {
                        let v = self.exponent[(r, c)].exp();
                        self.k[(r, c)] = v;
                        self.k[(c, r)] = v;
                    }
                }
            }
        }
        self.k_alpha = &self.k * &self.alpha;
    }

    /// One coordinate step; returns the absolute change.
    pub fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let new = self.proposal(j, lambda);
        let change = (new - self.xi[j]).abs();
        self.set_coordinate(j, new);
        change
    }

    /// Cyclic sweep in ascending index order; returns the largest change.
    pub fn sweep(&mut self, lambda: f64) -> f64 {
        (0..self.stack.p()).map(|j| self.update(j, lambda)).fold(0.0, f64::max)
    }

    /// `1/2 |y - K alpha|^2 + lambda0/2 alpha^T K alpha + n lambda sum(xi)`.
    pub fn objective(&self, lambda: f64) -> f64 {
        let n = self.stack.n() as f64;
        0.5 * (&self.y - &self.k_alpha).norm_squared()
            + 0.5 * self.lambda0 * self.alpha.dot(&self.k_alpha)
            + n * lambda * self.xi.iter().sum::<f64>()
    }

    /// Objective with `K` replaced by its linearization in direction `j`
    /// around the current scales, evaluated at `xi_j = t`.
    pub fn linearized_objective(&self, j: usize, t: f64, lambda: f64) -> f64 {
        let n = self.stack.n() as f64;
        let z = self.direction(j);
        let step = t - self.xi[j];
        let k_alpha = &self.k_alpha + &z * step;
        let l1: f64 = self.xi.iter().sum::<f64>() + step;
        0.5 * (&self.y - &k_alpha).norm_squared()
            + 0.5 * self.lambda0 * self.alpha.dot(&k_alpha)
            + n * lambda * l1
    }
}

/// Single positive-part coordinate update of `xi_j` from scales `xi`.
pub fn coordinate_update(
    stack: &DistanceStack,
    xi: &ScaleVector,
    j: usize,
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda: f64,
    lambda0: f64,
) -> Result<f64> {
    if j >= stack.p() {
        return Err(NgkError::IndexOutOfRange { index: j, p: stack.p() });
    }
    let mut state = CoordinateSolver::new(stack, y, alpha, lambda0)?;
    state.set_xi(xi)?;
    Ok(state.proposal(j, lambda))
}

/// Trace the path over a decreasing penalty grid with warm starts.
pub fn solve_path(
    stack: &DistanceStack,
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda0: f64,
    cfg: &PathConfig,
) -> Result<SolutionPath> {
    cfg.validate()?;
    if !(lambda0 > 0.0) {
        return Err(NgkError::InvalidInput(format!(
            "smoothing parameter must be positive, got {lambda0}"
        )));
    }
    let start = initial_lambda(stack, y, alpha, lambda0)?;
    let mut state = CoordinateSolver::new(stack, y, alpha, lambda0)?;
    let mut points = Vec::new();
    for lambda in cfg.grid(start.value) {
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < cfg.max_sweeps {
            let change = state.sweep(lambda);
            sweeps += 1;
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::debug!("path point lambda = {lambda:e} hit the sweep cap");
        }
        let xi = state.xi();
        points.push(PathPoint {
            lambda,
            active_set: xi.active_set(),
            objective: state.objective(lambda),
            xi,
            sweeps,
            converged,
        });
        if cfg.refit_alpha {
            let fit = kernel::lskm_fit(
                &kernel::kernel_matrix(stack, &state.xi())?,
                y,
                lambda0,
            )?;
            state.set_alpha(&fit.alpha);
        }
    }
    Ok(SolutionPath {
        points,
        kind: stack.kind(),
        y_tilde: modified_response(y, alpha, lambda0),
        alpha_init: alpha.clone(),
        lambda0,
        lambda_start: start,
    })
}

/// Profiled objective `Q0(xi) + n lambda sum(xi)`, with `Q0` in closed form.
pub fn profiled_objective(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64, lambda: f64) -> Result<f64> {
    let k = kernel::kernel_matrix(stack, xi)?;
    Ok(kernel::q0_objective(&k, y, lambda0)? + stack.n() as f64 * lambda * xi.l1_norm())
}

/// Linear-kernel design matrix `Z = [D^j alpha]` used by the exact
/// garrote form of the linear-kernel problem.
pub fn garrote_design(stack: &DistanceStack, alpha: &DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = stack.matrices().iter().map(|d| d * alpha).collect();
    DMatrix::from_columns(&cols)
}

/// Largest absolute coordinate difference between two scale vectors.
pub fn max_abs_diff(a: &ScaleVector, b: &ScaleVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
