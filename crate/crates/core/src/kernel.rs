//! Scaled kernel matrices, their scale derivatives, the least-squares kernel
//! machine and marginal-likelihood estimation of the smoothing parameter.

use nalgebra::{DMatrix, DVector};

use crate::data::{DistanceStack, KernelKind};
use crate::error::{NgkError, Result};
use crate::linalg::{self, SpdFactor};

/// Nonnegative per-predictor kernel scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector(Vec<f64>);

impl ScaleVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(NgkError::InvalidScale { index, value });
            }
        }
        Ok(ScaleVector(values))
    }

    pub fn zeros(p: usize) -> Self {
        ScaleVector(vec![0.0; p])
    }

    pub fn uniform(p: usize, rho: f64) -> Result<Self> {
        Self::new(vec![rho; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    /// Indices with strictly positive scale.
    pub fn active_set(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
    kind: KernelKind,
    xi: ScaleVector,
}

impl KernelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn xi(&self) -> &ScaleVector {
        &self.xi
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Wrap an arbitrary symmetric PSD matrix, e.g. for testing the
    /// objective evaluators on kernels not built from a stack.
    pub fn from_matrix(k: DMatrix<f64>, kind: KernelKind) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(NgkError::DimensionMismatch {
                expected: k.nrows(),
                found: k.ncols(),
            });
        }
        Ok(KernelMatrix {
            k,
            kind,
            xi: ScaleVector(Vec::new()),
        })
    }
}

/// Entrywise `g(sum_j xi_j D^j)` with `g = exp` (Gaussian) or identity (linear).
pub fn kernel_matrix(stack: &DistanceStack, xi: &ScaleVector) -> Result<KernelMatrix> {
    if xi.len() != stack.p() {
        return Err(NgkError::DimensionMismatch {
            expected: stack.p(),
            found: xi.len(),
        });
    }
    let mut k = stack.weighted_sum(xi.as_slice());
    if stack.kind() == KernelKind::Gaussian {
        k.apply(|v| *v = v.exp());
    }
    Ok(KernelMatrix {
        k,
        kind: stack.kind(),
        xi: xi.clone(),
    })
}

/// `dK/dxi_j` at the scales `kmat` was built with.
pub fn kernel_derivative(stack: &DistanceStack, kmat: &KernelMatrix, j: usize) -> Result<DMatrix<f64>> {
    if j >= stack.p() {
        return Err(NgkError::IndexOutOfRange { index: j, p: stack.p() });
    }
    Ok(match stack.kind() {
        KernelKind::Gaussian => kmat.k.component_mul(stack.matrix(j)),
        KernelKind::Linear => stack.matrix(j).clone(),
    })
}

/// `d^2 K / dxi_i dxi_j`; identically zero for the linear kernel.
pub fn kernel_second_derivative(
    stack: &DistanceStack,
    kmat: &KernelMatrix,
    i: usize,
    j: usize,
) -> Result<DMatrix<f64>> {
    let p = stack.p();
    for idx in [i, j] {
        if idx >= p {
            return Err(NgkError::IndexOutOfRange { index: idx, p });
        }
    }
    let n = stack.n();
    Ok(match stack.kind() {
        KernelKind::Gaussian => kmat
            .k
            .component_mul(stack.matrix(i))
            .component_mul(stack.matrix(j)),
        KernelKind::Linear => DMatrix::zeros(n, n),
    })
}

#[derive(Debug, Clone)]
pub struct KernelMachineFit {
    pub alpha: DVector<f64>,
    pub lambda0: f64,
    /// Noise variance, when estimated.
    pub sigma2: Option<f64>,
    /// Signal variance, when estimated.
    pub sigma2_alpha: Option<f64>,
    pub fitted: DVector<f64>,
}

/// Ridge-type fit `alpha = (lambda0 I + K)^{-1} y`.
pub fn lskm_fit(kmat: &KernelMatrix, y: &DVector<f64>, lambda0: f64) -> Result<KernelMachineFit> {
    check_lambda0(lambda0)?;
    if y.len() != kmat.n() {
        return Err(NgkError::DimensionMismatch {
            expected: kmat.n(),
            found: y.len(),
        });
    }
    let alpha = linalg::shifted_solve(&kmat.k, lambda0, y)?;
    let fitted = &kmat.k * &alpha;
    Ok(KernelMachineFit {
        alpha,
        lambda0,
        sigma2: None,
        sigma2_alpha: None,
        fitted,
    })
}

fn check_lambda0(lambda0: f64) -> Result<()> {
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return Err(NgkError::InvalidInput(format!(
            "smoothing parameter must be positive, got {lambda0}"
        )));
    }
    Ok(())
}

/// Bounds on both variance components during the likelihood search.
pub const VARIANCE_BOUNDS: (f64, f64) = (1e-8, 1e8);

/// Outcome of the marginal-likelihood search for the smoothing parameter.
#[derive(Debug, Clone)]
pub struct Lambda0Estimate {
    pub fit: KernelMachineFit,
    /// Maximized marginal log-likelihood.
    pub log_likelihood: f64,
    /// Optimum sits on a search bound (flat or monotone likelihood).
    pub at_boundary: bool,
}

/// Eigen-decomposed kernel used to evaluate the Gaussian marginal likelihood
/// of `y ~ N(0, s2a K + s2 I)` cheaply.
#[derive(Debug, Clone)]
pub struct MarginalLikelihood {
    eigenvalues: Vec<f64>,
    /// Squared projections of y on the eigenvectors.
    proj_sq: Vec<f64>,
}

impl MarginalLikelihood {
    pub fn new(k: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let eig = linalg::sym_eigen(k);
        let scale = k.norm().max(1.0);
        let min = eig.eigenvalues.min();
        if min < -1e-8 * scale {
            return Err(NgkError::NotPsd(min));
        }
        let eigenvalues = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let w = eig.eigenvectors.transpose() * y;
        Ok(MarginalLikelihood {
            eigenvalues,
            proj_sq: w.iter().map(|v| v * v).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn log_likelihood(&self, sigma2: f64, sigma2_alpha: f64) -> f64 {
        let n = self.n() as f64;
        let mut acc = 0.0;
        for (mu, w2) in self.eigenvalues.iter().zip(&self.proj_sq) {
            let v = sigma2_alpha * mu + sigma2;
            acc += v.ln() + w2 / v;
        }
        -0.5 * (acc + n * (2.0 * std::f64::consts::PI).ln())
    }

    /// Signal variance maximizing the likelihood at ratio `r = s2 / s2a`.
    pub fn profiled_sigma2_alpha(&self, r: f64) -> f64 {
        let s: f64 = self
            .eigenvalues
            .iter()
            .zip(&self.proj_sq)
            .map(|(mu, w2)| w2 / (mu + r))
            .sum();
        s / self.n() as f64
    }

    pub fn profile_log_likelihood(&self, r: f64) -> f64 {
        let s2a = self.profiled_sigma2_alpha(r);
        self.log_likelihood(r * s2a, s2a)
    }
}

/// Estimate `lambda0 = s2 / s2a` by maximizing the marginal likelihood with
/// every scale set to `rho`, then fit the kernel machine there.
pub fn estimate_lambda0(stack: &DistanceStack, y: &DVector<f64>, rho: f64) -> Result<Lambda0Estimate> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(NgkError::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let kmat = kernel_matrix(stack, &ScaleVector::uniform(stack.p(), rho)?)?;
    estimate_lambda0_for_kernel(&kmat, y)
}

/// Marginal-likelihood estimate of the smoothing parameter for a fixed kernel.
pub fn estimate_lambda0_for_kernel(kmat: &KernelMatrix, y: &DVector<f64>) -> Result<Lambda0Estimate> {
    if y.len() != kmat.n() {
        return Err(NgkError::DimensionMismatch {
            expected: kmat.n(),
            found: y.len(),
        });
    }
    let ml = MarginalLikelihood::new(kmat.matrix(), y)?;
    let (lo, hi) = VARIANCE_BOUNDS;
    let (log_lo, log_hi) = (lo.ln(), hi.ln());

    // coarse scan over log r, then golden-section refinement
    const STEPS: usize = 160;
    let h = (log_hi - log_lo) / STEPS as f64;
    let profile = |t: f64| ml.profile_log_likelihood(t.exp());
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut worst_val = f64::INFINITY;
    for i in 0..=STEPS {
        let v = profile(log_lo + i as f64 * h);
        worst_val = worst_val.min(v);
        // ties resolve toward the larger ratio, i.e. less signal
        if v >= best_val {
            best_val = v;
            best = i;
        }
    }
    if best_val - worst_val <= 1e-10 * (1.0 + best_val.abs()) {
        best = STEPS;
    }
    let at_boundary = best == 0 || best == STEPS;
    let t_opt = if at_boundary {
        log_lo + best as f64 * h
    } else {
        golden_max(&profile, log_lo + (best - 1) as f64 * h, log_lo + (best + 1) as f64 * h, 1e-10)
    };
    let r = t_opt.exp();
    let sigma2_alpha = ml.profiled_sigma2_alpha(r).clamp(lo, hi);
    let sigma2 = (r * sigma2_alpha).clamp(lo, hi);
    let lambda0 = sigma2 / sigma2_alpha;
    if at_boundary {
        log::warn!("marginal likelihood maximized on the search boundary (lambda0 = {lambda0:e})");
    }
    let mut fit = lskm_fit(kmat, y, lambda0)?;
    fit.sigma2 = Some(sigma2);
    fit.sigma2_alpha = Some(sigma2_alpha);
    Ok(Lambda0Estimate {
        log_likelihood: ml.log_likelihood(sigma2, sigma2_alpha),
        fit,
        at_boundary,
    })
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Closed-form `Q0(K) = (lambda0 / 2) y^T (lambda0 I + K)^{-1} y`.
pub fn q0_objective(kmat: &KernelMatrix, y: &DVector<f64>, lambda0: f64) -> Result<f64> {
    check_lambda0(lambda0)?;
    let beta = linalg::shifted_solve(kmat.matrix(), lambda0, y)?;
    Ok(0.5 * lambda0 * y.dot(&beta))
}

/// Penalized least-squares criterion with a given coefficient vector:
/// `1/2 |y - K a|^2 + lambda0/2 a^T K a`.
pub fn lskm_criterion(kmat: &KernelMatrix, y: &DVector<f64>, alpha: &DVector<f64>, lambda0: f64) -> f64 {
    let ka = kmat.matrix() * alpha;
    0.5 * (y - &ka).norm_squared() + 0.5 * lambda0 * alpha.dot(&ka)
}

fn delta_factor(kmat: &KernelMatrix, lambda0: f64) -> Result<SpdFactor> {
    let mut delta = kmat.matrix().clone();
    for i in 0..delta.nrows() {
        delta[(i, i)] += lambda0;
    }
    SpdFactor::new(&delta)
}

/// Analytic gradient of `Q0(xi)`:
/// `dQ0/dxi_j = -(lambda0 / 2) y^T D^{-1} K'_j D^{-1} y` with `D = lambda0 I + K`.
pub fn q0_gradient(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64) -> Result<DVector<f64>> {
    check_lambda0(lambda0)?;
    let kmat = kernel_matrix(stack, xi)?;
    let beta = delta_factor(&kmat, lambda0)?.solve(y);
    let mut g = DVector::zeros(stack.p());
    for j in 0..stack.p() {
        let kd = kernel_derivative(stack, &kmat, j)?;
        g[j] = -0.5 * lambda0 * beta.dot(&(&kd * &beta));
    }
    Ok(g)
}

/// Analytic Hessian of `Q0(xi)`.
pub fn q0_hessian(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64) -> Result<DMatrix<f64>> {
    check_lambda0(lambda0)?;
    let p = stack.p();
    let kmat = kernel_matrix(stack, xi)?;
    let factor = delta_factor(&kmat, lambda0)?;
    let beta = factor.solve(y);
    let kb: Vec<DVector<f64>> = (0..p)
        .map(|j| kernel_derivative(stack, &kmat, j).map(|kd| kd * &beta))
        .collect::<Result<_>>()?;
    let dinv_kb: Vec<DVector<f64>> = kb.iter().map(|v| factor.solve(v)).collect();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let second = match stack.kind() {
                KernelKind::Linear => 0.0,
                KernelKind::Gaussian => {
                    beta.dot(&(kernel_second_derivative(stack, &kmat, i, j)? * &beta))
                }
            };
            let v = 0.5 * lambda0 * (2.0 * kb[i].dot(&dinv_kb[j]) - second);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}
