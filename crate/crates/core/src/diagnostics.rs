//! Numerical versions of the theoretical selection conditions: derivative
//! design `Z`, its covariance blocks, the incoherence left-hand side, KKT
//! residuals and the sparsistency bound.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, DistanceStack};
use crate::error::{NgkError, Result};
use crate::kernel::{self, kernel_derivative, kernel_matrix, ScaleVector};
use crate::linalg::{self, inf_norm, min_eigenvalue, select_columns};
use crate::path::CoordinateSolver;

/// Relative eigenvalue floor below which a Gram block counts as singular.
const SINGULAR_TOL: f64 = 1e-12;

/// `Z = [K'_1 alpha, ..., K'_p alpha]` at scales `xi`.
pub fn derivative_design(stack: &DistanceStack, xi: &ScaleVector, alpha: &DVector<f64>) -> Result<DMatrix<f64>> {
    if alpha.len() != stack.n() {
        return Err(NgkError::DimensionMismatch {
            expected: stack.n(),
            found: alpha.len(),
        });
    }
    let kmat = kernel_matrix(stack, xi)?;
    let mut z = DMatrix::zeros(stack.n(), stack.p());
    for j in 0..stack.p() {
        z.set_column(j, &(kernel_derivative(stack, &kmat, j)? * alpha));
    }
    Ok(z)
}

/// Inverse of a symmetric Gram block, refusing near-singular input.
fn gram_inverse(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let min = min_eigenvalue(g);
    let scale = g.trace().abs().max(f64::MIN_POSITIVE);
    if !(min > SINGULAR_TOL * scale) {
        return Err(NgkError::Singular(format!(
            "{what} has smallest eigenvalue {min:e}"
        )));
    }
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| NgkError::Singular(format!("{what} is not positive definite")))
}

fn check_active(active: &[usize], p: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if active.is_empty() {
        return Err(NgkError::InvalidInput("active set is empty".into()));
    }
    let mut flag = vec![false; p];
    for &j in active {
        if j >= p {
            return Err(NgkError::IndexOutOfRange { index: j, p });
        }
        if flag[j] {
            return Err(NgkError::InvalidInput(format!("predictor {j} repeated in active set")));
        }
        flag[j] = true;
    }
    let inactive = (0..p).filter(|&j| !flag[j]).collect();
    Ok((active.to_vec(), inactive))
}

#[derive(Debug, Clone)]
pub struct IncoherenceReport {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub z: DMatrix<f64>,
    /// `Z_1^T Z_1 / n`.
    pub sigma11: DMatrix<f64>,
    /// `Z_0^T Z_1 / n`.
    pub sigma01: DMatrix<f64>,
    /// `I - Z_1 (Z_1^T Z_1)^{-1} Z_1^T`.
    pub projection: DMatrix<f64>,
    /// `Sigma01 Sigma11^{-1} 1`, the penalty-free part of `lhs`.
    pub covariance_term: DVector<f64>,
    /// `Z_0^T P alpha`, scaled by `lambda0 / (2 n lambda)` in `lhs`.
    pub residual_term: DVector<f64>,
    pub lhs: DVector<f64>,
    /// `1 - max(lhs)`; 1 when there are no inactive predictors.
    pub gamma_margin: f64,
    pub c_min: f64,
    /// `|Sigma11^{-1}|_inf`.
    pub sigma11_inv_norm: f64,
    /// `v_j = -(2 sqrt(n))^{-1} alpha^T K'_j alpha`: the scaled objective
    /// gradient with the supplied coefficients standing in for the solve.
    pub v: DVector<f64>,
    pub lambda: f64,
    pub lambda0: f64,
}

impl IncoherenceReport {
    pub fn max_lhs(&self) -> Option<f64> {
        (!self.lhs.is_empty()).then(|| self.lhs.max())
    }

    pub fn satisfied(&self) -> bool {
        self.max_lhs().is_none_or(|m| m < 1.0)
    }

    /// `lhs` recomputed for another penalty.
    pub fn lhs_at(&self, lambda: f64) -> DVector<f64> {
        let n = self.z.nrows() as f64;
        &self.covariance_term - &self.residual_term * (self.lambda0 / (2.0 * n * lambda))
    }
}

pub fn ngk_incoherence(
    stack: &DistanceStack,
    xi_ref: &ScaleVector,
    active: &[usize],
    alpha_ref: &DVector<f64>,
    lambda: f64,
    lambda0: f64,
) -> Result<IncoherenceReport> {
    if !(lambda > 0.0) {
        return Err(NgkError::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let (active, inactive) = check_active(active, stack.p())?;
    let n = stack.n();
    let nf = n as f64;
    let z = derivative_design(stack, xi_ref, alpha_ref)?;
    let z1 = select_columns(&z, &active);
    let z0 = select_columns(&z, &inactive);
    let g11 = z1.transpose() * &z1;
    let g11_inv = gram_inverse(&g11, "Z1^T Z1")?;
    let sigma11 = &g11 / nf;
    let sigma01 = z0.transpose() * &z1 / nf;
    let sigma11_inv = &g11_inv * nf;
    let projection = DMatrix::identity(n, n) - &z1 * &g11_inv * z1.transpose();
    let ones = DVector::from_element(active.len(), 1.0);
    let covariance_term = &sigma01 * (&sigma11_inv * &ones);
    let residual_term = z0.transpose() * (&projection * alpha_ref);
    let lhs = &covariance_term - &residual_term * (lambda0 / (2.0 * nf * lambda));
    let gamma_margin = if lhs.is_empty() { 1.0 } else { 1.0 - lhs.max() };
    let v = DVector::from_fn(stack.p(), |j, _| -0.5 * alpha_ref.dot(&z.column(j)) / nf.sqrt());
    Ok(IncoherenceReport {
        c_min: min_eigenvalue(&sigma11),
        sigma11_inv_norm: inf_norm(&sigma11_inv),
        active,
        inactive,
        z,
        sigma11,
        sigma01,
        projection,
        covariance_term,
        residual_term,
        lhs,
        gamma_margin,
        v,
        lambda,
        lambda0,
    })
}

/// `|X_0^T X_1 (X_1^T X_1)^{-1} s|` entrywise, for the linear lasso.
pub fn lasso_incoherence(ds: &Dataset, active: &[usize], signs: &[f64]) -> Result<DVector<f64>> {
    let (active, inactive) = check_active(active, ds.p())?;
    if signs.len() != active.len() {
        return Err(NgkError::DimensionMismatch {
            expected: active.len(),
            found: signs.len(),
        });
    }
    let x1 = select_columns(ds.x(), &active);
    let x0 = select_columns(ds.x(), &inactive);
    let g_inv = gram_inverse(&(x1.transpose() * &x1), "X1^T X1")?;
    let s = DVector::from_column_slice(signs);
    Ok((x0.transpose() * &x1 * g_inv * s).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `g_j - 1` for active predictors, `g_j` for inactive ones, where
    /// `g_j = (n lambda)^{-1} (y~ - K alpha)^T K'_j alpha`.
    pub residuals: Vec<f64>,
    pub active: Vec<usize>,
    /// Penalty too close to zero to normalize by.
    pub skipped: bool,
}

impl KktReport {
    /// Largest violation: `|g_j - 1|` on the active set, `max(g_j - 1, 0)` off it.
    pub fn max_violation(&self) -> f64 {
        self.residuals
            .iter()
            .enumerate()
            .map(|(j, &r)| if self.active.contains(&j) { r.abs() } else { (r - 1.0).max(0.0) })
            .fold(0.0, f64::max)
    }
}

/// Subgradient check of a path point under the fixed-`alpha` linearized
/// gradient.
pub fn kkt_residuals(
    stack: &DistanceStack,
    xi: &ScaleVector,
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda: f64,
    lambda0: f64,
) -> Result<KktReport> {
    let n = stack.n() as f64;
    let active = xi.active_set();
    if !(n * lambda > 1e-12) {
        log::warn!("penalty {lambda:e} too small for a KKT check; skipped");
        return Ok(KktReport {
            residuals: vec![f64::NAN; stack.p()],
            active,
            skipped: true,
        });
    }
    let mut solver = CoordinateSolver::new(stack, y, alpha, lambda0)?;
    solver.set_xi(xi)?;
    let resid = solver.residual();
    let residuals = (0..stack.p())
        .map(|j| {
            let g = resid.dot(&solver.direction(j)) / (n * lambda);
            if xi.get(j) > 0.0 {
                g - 1.0
            } else {
                g
            }
        })
        .collect();
    Ok(KktReport {
        residuals,
        active,
        skipped: false,
    })
}

/// Sparsistency bound with the unobservable rate term set to zero:
/// `lambda (4 sigma / sqrt(C_min) + |S^{-1}|_inf) + |S^{-1}|_inf lambda0 n^{-1/2} |v_A|_inf`.
pub fn theorem2_bound(report: &IncoherenceReport, lambda: f64, lambda0: f64, sigma: f64, a: usize, n: usize) -> Result<f64> {
    if !(report.c_min > 0.0) {
        return Err(NgkError::Singular(format!(
            "smallest eigenvalue of the active block is {:e}",
            report.c_min
        )));
    }
    if a != report.active.len() {
        return Err(NgkError::DimensionMismatch {
            expected: report.active.len(),
            found: a,
        });
    }
    if lambda < 0.0 || lambda0 < 0.0 || sigma < 0.0 || n == 0 {
        return Err(NgkError::InvalidInput("bound inputs must be nonnegative".into()));
    }
    let v_inf = report.active.iter().map(|&j| report.v[j].abs()).fold(0.0, f64::max);
    let s_inv = report.sigma11_inv_norm;
    Ok(lambda * (4.0 * sigma / report.c_min.sqrt() + s_inv) + s_inv * lambda0 * v_inf / (n as f64).sqrt())
}

/// `v_n = lambda0^{-1} n^{-1/2} dQ0/dxi`.
pub fn vn(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64) -> Result<DVector<f64>> {
    let g = kernel::q0_gradient(stack, xi, y, lambda0)?;
    Ok(g / (lambda0 * (stack.n() as f64).sqrt()))
}

/// `M_n = (lambda0 n)^{-1} d^2 Q0 / dxi dxi^T`.
pub fn mn(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64) -> Result<DMatrix<f64>> {
    let h = kernel::q0_hessian(stack, xi, y, lambda0)?;
    Ok(h / (lambda0 * stack.n() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub lambda: f64,
    pub lambda0: f64,
    /// `None` when every predictor is active.
    pub max_lhs: Option<f64>,
    pub gamma_margin: f64,
}

/// Incoherence over a `(lambda, lambda0)` grid, with the reference
/// coefficients `alpha = (lambda0 I + K(xi_ref))^{-1} y` recomputed per `lambda0`.
pub fn incoherence_sweep(
    stack: &DistanceStack,
    y: &DVector<f64>,
    xi_ref: &ScaleVector,
    active: &[usize],
    lambdas: &[f64],
    lambda0s: &[f64],
) -> Result<Vec<SweepCell>> {
    let kmat = kernel_matrix(stack, xi_ref)?;
    let mut cells = Vec::with_capacity(lambdas.len() * lambda0s.len());
    for &l0 in lambda0s {
        let alpha = linalg::shifted_solve(kmat.matrix(), l0, y)?;
        let first = lambdas.first().copied().unwrap_or(1.0);
        let report = ngk_incoherence(stack, xi_ref, active, &alpha, first, l0)?;
        for &l in lambdas {
            if !(l > 0.0) {
                return Err(NgkError::InvalidInput(format!("lambda must be positive, got {l}")));
            }
            let lhs = report.lhs_at(l);
            let max_lhs = (!lhs.is_empty()).then(|| lhs.max());
            cells.push(SweepCell {
                lambda: l,
                lambda0: l0,
                max_lhs,
                gamma_margin: max_lhs.map_or(1.0, |m| 1.0 - m),
            });
        }
    }
    Ok(cells)
}

/// Geometric grid of `count` points from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![hi];
    }
    let step = (lo / hi).ln() / (count - 1) as f64;
    (0..count).map(|k| hi * (step * k as f64).exp()).collect()
}
