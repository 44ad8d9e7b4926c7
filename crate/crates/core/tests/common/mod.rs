#![allow(dead_code)]

//! Shared fixtures, brute-force oracles and invariant checks for the
//! integration suites.

use nalgebra::{DMatrix, DVector};
use ngk::data::{build_distance_stack, Dataset, DistanceStack, KernelKind};
use ngk::diagnostics::{self, kkt_residuals, ngk_incoherence};
use ngk::kernel::{self, kernel_derivative, kernel_matrix, KernelMatrix, ScaleVector};
use ngk::path::{self, CoordinateSolver, PathConfig};
use ngk::resampling::{bootstrap_select, ResampleMode, ResamplePlan};
use ngk::selection::score_point;
use ngk::{nis_screen, NgkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = std::result::Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn kinds() -> [KernelKind; 2] {
    [KernelKind::Gaussian, KernelKind::Linear]
}

/// Random design with a smooth signal in the first column (and an
/// interaction with the second when present).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
    loop {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0f64));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let second = if p > 1 { x[(i, 1)] } else { 0.0 };
                2.0 * x[(i, 0)].sin() + 0.5 * x[(i, 0)] * second + 0.3 * normal(rng)
            })
            .collect();
        if let Ok(ds) = Dataset::from_raw(&y, &x, None) {
            return ds;
        }
    }
}

pub fn random_xi(rng: &mut ChaCha8Rng, p: usize, hi: f64) -> ScaleVector {
    ScaleVector::new((0..p).map(|_| rng.random_range(0.0..hi)).collect()).unwrap()
}

/// Random PSD matrix `A A^T / m` of rank at most `rank`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| normal(rng));
    &a * a.transpose() / rank as f64
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Relative difference with an absolute floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Smoothing parameter and initial coefficients from the default pipeline.
pub fn initial_fit(stack: &DistanceStack, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let est = kernel::estimate_lambda0(stack, y, 1.0 / stack.p() as f64).unwrap();
    (est.fit.alpha, est.fit.lambda0)
}

/// Fixed-alpha criterion `1/2 |y - K a|^2 + lambda0/2 a^T K a + n lambda sum(xi)`,
/// computed from scratch.
pub fn fixed_alpha_objective(
    stack: &DistanceStack,
    xi: &[f64],
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda0: f64,
    lambda: f64,
) -> f64 {
    let n = stack.n();
    let mut e = DMatrix::<f64>::zeros(n, n);
    for (j, &w) in xi.iter().enumerate() {
        e += stack.matrix(j) * w;
    }
    let k = match stack.kind() {
        KernelKind::Gaussian => e.map(f64::exp),
        KernelKind::Linear => e,
    };
    let ka = &k * alpha;
    0.5 * (y - &ka).norm_squared() + 0.5 * lambda0 * alpha.dot(&ka) + n as f64 * lambda * xi.iter().sum::<f64>()
}

/// Exact minimizer of `1/2 |b - Z xi|^2 + t sum(xi)` over `xi >= 0` by
/// enumerating every support and keeping the one satisfying the KKT system.
pub fn nonnegative_qp(z: &DMatrix<f64>, b: &DVector<f64>, t: f64) -> DVector<f64> {
    let p = z.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let mut xi = DVector::zeros(p);
        if !support.is_empty() {
            let zs = DMatrix::from_fn(z.nrows(), support.len(), |i, k| z[(i, support[k])]);
            let rhs = zs.transpose() * b - DVector::from_element(support.len(), t);
            let Some(sol) = (zs.transpose() * &zs).lu().solve(&rhs) else {
                continue;
            };
            if sol.iter().any(|v| *v <= 0.0) {
                continue;
            }
            for (k, &j) in support.iter().enumerate() {
                xi[j] = sol[k];
            }
        }
        let r = b - z * &xi;
        let feasible = (0..p).all(|j| support.contains(&j) || z.column(j).dot(&r) <= t * (1.0 + 1e-9));
        if feasible {
            let obj = 0.5 * r.norm_squared() + t * xi.sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, xi));
            }
        }
    }
    best.expect("a convex problem has a KKT point").1
}

/// Evaluate `f` over the square grid `[0, hi]^2` with spacing `step` and
/// return the grid values (row-major in the first coordinate).
pub struct Grid2 {
    pub step: f64,
    pub count: usize,
    pub values: Vec<f64>,
}

impl Grid2 {
    /// Smooth part of the fixed-alpha Gaussian criterion for `p = 2`,
    /// tabulated once so several penalties can share it.
    pub fn gaussian_fit_term(stack: &DistanceStack, y: &DVector<f64>, alpha: &DVector<f64>, lambda0: f64, hi: f64, step: f64) -> Grid2 {
        let count = (hi / step).round() as usize + 1;
        let (d1, d2) = (stack.matrix(0), stack.matrix(1));
        // K = exp(s D1) o exp(t D2), so one table per coordinate suffices
        let table = |d: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
            (0..count).map(|i| d.map(|v| (v * i as f64 * step).exp())).collect()
        };
        let e1 = table(d1);
        let e2 = table(d2);
        let yy = 0.5 * y.norm_squared();
        let mut values = vec![0.0; count * count];
        for a in 0..count {
            for b in 0..count {
                let k = e1[a].component_mul(&e2[b]);
                let ka = &k * alpha;
                let v = yy - y.dot(&ka) + 0.5 * ka.norm_squared() + 0.5 * lambda0 * alpha.dot(&ka);
                values[a * count + b] = v;
            }
        }
        Grid2 { step, count, values }
    }

    pub fn argmin_penalized(&self, weight: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..self.count {
            for b in 0..self.count {
                let v = self.values[a * self.count + b] + weight * self.step * (a + b) as f64;
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        (best.1 as f64 * self.step, best.2 as f64 * self.step)
    }
}

/// Central finite differences of `Q0` in each scale.
pub fn q0_fd_gradient(stack: &DistanceStack, xi: &ScaleVector, y: &DVector<f64>, lambda0: f64, h: f64) -> DVector<f64> {
    let q0 = |v: Vec<f64>| {
        let k = kernel_matrix(stack, &ScaleVector::new(v).unwrap()).unwrap();
        kernel::q0_objective(&k, y, lambda0).unwrap()
    };
    DVector::from_fn(stack.p(), |j, _| {
        let mut plus = xi.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[j] += h;
        minus[j] -= h;
        (q0(plus) - q0(minus)) / (2.0 * h)
    })
}

/// Gradient and Hessian of `Q0` against central differences at one random
/// instance; returns the largest relative errors.
pub fn q0_derivative_errors(seed: u64, kind: KernelKind, n: usize, p: usize) -> (f64, f64) {
    let mut r = rng(seed);
    let ds = random_dataset(&mut r, n, p);
    let stack = build_distance_stack(&ds, kind);
    // interior point so the difference stencil stays feasible
    let xi = ScaleVector::new((0..p).map(|_| r.random_range(0.05..1.0)).collect()).unwrap();
    let lambda0 = r.random_range(0.05..1.0);
    let y = ds.y();
    let h = 1e-5;
    let g = kernel::q0_gradient(&stack, &xi, y, lambda0).unwrap();
    let fd = q0_fd_gradient(&stack, &xi, y, lambda0, h);
    let gscale = fd.amax().max(1e-8);
    let grad_err = (0..p).map(|j| (g[j] - fd[j]).abs() / fd[j].abs().max(1e-3 * gscale)).fold(0.0, f64::max);

    let hess = kernel::q0_hessian(&stack, &xi, y, lambda0).unwrap();
    let hscale = max_abs(&hess).max(1e-8);
    let mut hess_err = 0.0f64;
    for j in 0..p {
        let mut plus = xi.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[j] += h;
        minus[j] -= h;
        let gp = kernel::q0_gradient(&stack, &ScaleVector::new(plus).unwrap(), y, lambda0).unwrap();
        let gm = kernel::q0_gradient(&stack, &ScaleVector::new(minus).unwrap(), y, lambda0).unwrap();
        for i in 0..p {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            hess_err = hess_err.max((hess[(i, j)] - fd).abs() / fd.abs().max(1e-3 * hscale));
        }
    }
    (grad_err, hess_err)
}

/// Randomized instance parameters for an invariant check.
#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub kind: KernelKind,
}

impl Case {
    pub fn draw(r: &mut ChaCha8Rng) -> Case {
        Case {
            seed: r.random(),
            n: r.random_range(5..=30),
            p: r.random_range(1..=5),
            kind: if r.random_bool(0.5) { KernelKind::Gaussian } else { KernelKind::Linear },
        }
    }

    fn data(&self) -> (ChaCha8Rng, Dataset, DistanceStack) {
        let mut r = rng(self.seed);
        let ds = random_dataset(&mut r, self.n, self.p);
        let stack = build_distance_stack(&ds, self.kind);
        (r, ds, stack)
    }
}

pub type Invariant = fn(&Case) -> Check;

/// Every randomized invariant, by name.
pub const INVARIANTS: &[(&str, Invariant)] = &[
    ("standardize_round_trip", standardize_round_trip),
    ("distance_stack_structure", distance_stack_structure),
    ("gaussian_stack_sums_to_pairwise_distance", gaussian_stack_sums_to_pairwise_distance),
    ("kernel_psd_unit_diagonal", kernel_psd_unit_diagonal),
    ("linear_kernel_additive", linear_kernel_additive),
    ("kernel_derivative_matches_differences", kernel_derivative_matches_differences),
    ("q0_monotone_in_kernel", q0_monotone_in_kernel),
    ("q0_equals_criterion_at_fit", q0_equals_criterion_at_fit),
    ("lskm_residual_small", lskm_residual_small),
    ("derivative_sum_bounds", derivative_sum_bounds),
    ("path_nonnegative_and_starts_empty", path_nonnegative_and_starts_empty),
    ("coordinate_step_never_increases", coordinate_step_never_increases),
    ("kkt_at_converged_points", kkt_at_converged_points),
    ("converged_points_are_local_minima", converged_points_are_local_minima),
    ("df_eigenvalue_identity", df_eigenvalue_identity),
    ("df_monotone_linear", df_monotone_linear),
    ("null_model_linear", null_model_linear),
    ("projection_idempotent", projection_idempotent),
    ("q0_derivatives_match_differences", q0_derivatives_match_differences),
    ("linear_curvature_psd", linear_curvature_psd),
    ("screen_sign_invariant", screen_sign_invariant),
    ("screen_structure", screen_structure),
    ("pipeline_relabel_equivariant", pipeline_relabel_equivariant),
    ("bootstrap_counts_consistent", bootstrap_counts_consistent),
    ("resampled_design_standardized", resampled_design_standardized),
    ("generation_deterministic", generation_deterministic),
];

/// Names of the invariants required by the acceptance suite.
pub const ACCEPTANCE_INVARIANTS: &[&str] = &[
    "kernel_psd_unit_diagonal",
    "derivative_sum_bounds",
    "q0_monotone_in_kernel",
    "projection_idempotent",
    "kkt_at_converged_points",
    "df_eigenvalue_identity",
];

pub fn standardize_round_trip(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let x = DMatrix::from_fn(c.n, c.p, |_, _| r.random_range(-50.0..50.0) + 10.0);
    let y: Vec<f64> = (0..c.n).map(|_| normal(&mut r)).collect();
    let ds = Dataset::from_raw(&y, &x, None).map_err(|e| e.to_string())?;
    let back = ds.destandardize_x();
    let err = (&back - &x).iter().zip(x.iter()).map(|(d, v)| d.abs() / v.abs().max(1.0)).fold(0.0, f64::max);
    ensure(err <= 1e-9, || format!("round trip error {err:e}"))?;
    let ys: f64 = ds.y().sum();
    ensure(ys.abs() <= 1e-9 * ds.y().amax().max(1.0) * c.n as f64, || format!("response not centered: {ys:e}"))
}

pub fn distance_stack_structure(c: &Case) -> Check {
    let (_, ds, stack) = c.data();
    ensure(stack.p() == c.p && stack.n() == c.n, || "stack shape".into())?;
    for j in 0..c.p {
        let col = ds.x().column(j);
        ensure(col.sum().abs() < 1e-10, || format!("column {j} mean"))?;
        ensure((col.norm_squared() - 1.0).abs() < 1e-10, || format!("column {j} scale"))?;
        let d = stack.matrix(j);
        ensure(max_abs(&(d - d.transpose())) == 0.0, || format!("D{j} asymmetric"))?;
        match c.kind {
            KernelKind::Gaussian => {
                ensure(d.diagonal().iter().all(|v| *v == 0.0), || format!("D{j} diagonal"))?;
                ensure(d.iter().all(|v| *v <= 0.0), || format!("D{j} positive entry"))?;
                let s = d.abs().sum() / c.n as f64;
                ensure((s - 2.0).abs() < 1e-10, || format!("D{j} abs sum {s}"))?;
            }
            KernelKind::Linear => {
                ensure((d.trace() - 1.0).abs() < 1e-10, || format!("D{j} trace"))?;
                ensure(min_eig(d) > -1e-12, || format!("D{j} not PSD"))?;
                let outer = col * col.transpose();
                ensure(max_abs(&(d - outer)) < 1e-14, || format!("D{j} not rank one"))?;
            }
        }
    }
    Ok(())
}

pub fn gaussian_stack_sums_to_pairwise_distance(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let ds = random_dataset(&mut r, c.n, c.p);
    let stack = build_distance_stack(&ds, KernelKind::Gaussian);
    let total = stack.weighted_sum(&vec![1.0; c.p]);
    let x = ds.x();
    for k in 0..c.n {
        for l in 0..c.n {
            let d2 = (x.row(k) - x.row(l)).norm_squared();
            ensure((total[(k, l)] + d2).abs() < 1e-12, || format!("entry ({k},{l})"))?;
        }
    }
    Ok(())
}

pub fn kernel_psd_unit_diagonal(c: &Case) -> Check {
    let (mut r, _, stack) = c.data();
    let xi = random_xi(&mut r, c.p, 3.0);
    let k = kernel_matrix(&stack, &xi).map_err(|e| e.to_string())?;
    let m = k.matrix();
    ensure(max_abs(&(m - m.transpose())) < 1e-14, || "kernel asymmetric".into())?;
    if c.kind == KernelKind::Gaussian {
        ensure(m.diagonal().iter().all(|v| *v == 1.0), || "gaussian diagonal differs from 1".into())?;
    }
    let scale = m.diagonal().amax().max(1.0);
    let lo = min_eig(m);
    ensure(lo >= -1e-10 * scale * c.n as f64, || format!("kernel eigenvalue {lo:e}"))
}

pub fn linear_kernel_additive(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let ds = random_dataset(&mut r, c.n, c.p);
    let stack = build_distance_stack(&ds, KernelKind::Linear);
    let a = random_xi(&mut r, c.p, 3.0);
    let b = random_xi(&mut r, c.p, 3.0);
    let sum: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| u + v).collect();
    let ka = kernel_matrix(&stack, &a).unwrap();
    let kb = kernel_matrix(&stack, &b).unwrap();
    let ks = kernel_matrix(&stack, &ScaleVector::new(sum).unwrap()).unwrap();
    let err = max_abs(&(ks.matrix() - ka.matrix() - kb.matrix()));
    ensure(err <= 1e-12, || format!("additivity error {err:e}"))
}

pub fn kernel_derivative_matches_differences(c: &Case) -> Check {
    let (mut r, _, stack) = c.data();
    let xi = random_xi(&mut r, c.p, 3.0);
    let k = kernel_matrix(&stack, &xi).unwrap();
    let h = 1e-6;
    for j in 0..c.p {
        let analytic = kernel_derivative(&stack, &k, j).unwrap();
        let mut plus = xi.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[j] += h;
        minus[j] = (minus[j] - h).max(0.0);
        let step = plus[j] - minus[j];
        let kp = kernel_matrix(&stack, &ScaleVector::new(plus).unwrap()).unwrap();
        let km = kernel_matrix(&stack, &ScaleVector::new(minus).unwrap()).unwrap();
        let fd = (kp.matrix() - km.matrix()) / step;
        let err = max_abs(&(fd - analytic));
        ensure(err <= 1e-5, || format!("derivative {j} error {err:e}"))?;
    }
    Ok(())
}

pub fn q0_monotone_in_kernel(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let k = random_psd(&mut r, c.n, c.p.max(2));
    let e = random_psd(&mut r, c.n, c.p);
    let y = DVector::from_fn(c.n, |_, _| normal(&mut r));
    let lambda0 = r.random_range(0.01..2.0);
    let base = kernel::q0_objective(&KernelMatrix::from_matrix(k.clone(), c.kind).unwrap(), &y, lambda0).unwrap();
    let bigger = kernel::q0_objective(&KernelMatrix::from_matrix(k + e, c.kind).unwrap(), &y, lambda0).unwrap();
    ensure(bigger <= base + 1e-10, || format!("Q0 increased from {base} to {bigger}"))
}

pub fn q0_equals_criterion_at_fit(c: &Case) -> Check {
    let (mut r, ds, stack) = c.data();
    let xi = random_xi(&mut r, c.p, 2.0);
    let lambda0 = r.random_range(0.01..2.0);
    let k = kernel_matrix(&stack, &xi).unwrap();
    let fit = kernel::lskm_fit(&k, ds.y(), lambda0).map_err(|e| e.to_string())?;
    let closed = kernel::q0_objective(&k, ds.y(), lambda0).unwrap();
    let direct = kernel::lskm_criterion(&k, ds.y(), &fit.alpha, lambda0);
    ensure(rel_err(closed, direct, 1e-12) <= 1e-8, || format!("closed {closed} vs direct {direct}"))
}

pub fn lskm_residual_small(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let k = random_psd(&mut r, 8, 1 + c.p);
    let y = DVector::from_fn(8, |_, _| normal(&mut r));
    let lambda0 = r.random_range(1e-3..2.0);
    let kmat = KernelMatrix::from_matrix(k.clone(), KernelKind::Linear).unwrap();
    let fit = kernel::lskm_fit(&kmat, &y, lambda0).unwrap();
    let resid = (&k * &fit.alpha + &fit.alpha * lambda0 - &y).norm();
    ensure(resid <= 1e-8 * y.norm(), || format!("residual {resid:e}"))?;
    ensure((&fit.fitted - &k * &fit.alpha).amax() < 1e-12, || "fitted differs from K alpha".into())
}

pub fn derivative_sum_bounds(c: &Case) -> Check {
    let (mut r, _, stack) = c.data();
    let xi = random_xi(&mut r, c.p, 3.0);
    let k = kernel_matrix(&stack, &xi).unwrap();
    let bound = match c.kind {
        KernelKind::Gaussian => 2.0,
        KernelKind::Linear => 1.0,
    };
    for j in 0..c.p {
        let s = kernel_derivative(&stack, &k, j).unwrap().abs().sum() / c.n as f64;
        ensure(s <= bound + 1e-12, || format!("predictor {j}: {s} > {bound}"))?;
    }
    Ok(())
}

fn small_path_config() -> PathConfig {
    PathConfig {
        grid_size: 12,
        lambda_min_ratio: 1e-2,
        tol: 1e-10,
        max_sweeps: 2000,
        ..PathConfig::default()
    }
}

pub fn path_nonnegative_and_starts_empty(c: &Case) -> Check {
    let (_, ds, stack) = c.data();
    let (alpha, lambda0) = initial_fit(&stack, ds.y());
    let path = path::solve_path(&stack, ds.y(), &alpha, lambda0, &small_path_config()).map_err(|e| e.to_string())?;
    let first = &path.points[0];
    ensure(first.xi.as_slice().iter().all(|v| *v == 0.0), || "first point not empty".into())?;
    ensure(path.points.windows(2).all(|w| w[1].lambda < w[0].lambda), || "grid not decreasing".into())?;
    for pt in &path.points {
        ensure(pt.xi.as_slice().iter().all(|v| *v >= 0.0 && v.is_finite()), || "negative scale".into())?;
        ensure(pt.objective.is_finite(), || "objective not finite".into())?;
        ensure(pt.active_set == pt.xi.active_set(), || "active set mismatch".into())?;
    }
    // a sweep just above the starting penalty leaves everything at zero
    let mut solver = CoordinateSolver::new(&stack, ds.y(), &alpha, lambda0).unwrap();
    solver.sweep(path.lambda_start.value * 1.001);
    ensure(solver.xi().as_slice().iter().all(|v| *v == 0.0), || "sweep above the start admitted a predictor".into())
}

pub fn coordinate_step_never_increases(c: &Case) -> Check {
    let (mut r, ds, stack) = c.data();
    let (alpha, lambda0) = initial_fit(&stack, ds.y());
    let mut solver = CoordinateSolver::new(&stack, ds.y(), &alpha, lambda0).unwrap();
    solver.set_xi(&random_xi(&mut r, c.p, 1.0)).unwrap();
    let start = path::initial_lambda(&stack, ds.y(), &alpha, lambda0).unwrap().value;
    let lambda = start * r.random_range(1e-3..1.5f64);
    let j = r.random_range(0..c.p);
    let current = solver.xi().get(j);
    let proposed = solver.proposal(j, lambda);
    ensure(proposed >= 0.0, || "negative proposal".into())?;
    let before = solver.linearized_objective(j, current, lambda);
    let after = solver.linearized_objective(j, proposed, lambda);
    ensure(after - before <= 1e-10 * before.abs().max(1.0), || format!("step raised {before} to {after}"))
}

pub fn kkt_at_converged_points(c: &Case) -> Check {
    let (_, ds, stack) = c.data();
    let (alpha, lambda0) = initial_fit(&stack, ds.y());
    let path = path::solve_path(&stack, ds.y(), &alpha, lambda0, &small_path_config()).unwrap();
    for pt in path.points.iter().filter(|p| p.converged) {
        let rep = kkt_residuals(&stack, &pt.xi, ds.y(), &alpha, pt.lambda, lambda0).unwrap();
        if rep.skipped {
            continue;
        }
        let mut solver = CoordinateSolver::new(&stack, ds.y(), &alpha, lambda0).unwrap();
        solver.set_xi(&pt.xi).unwrap();
        for j in 0..c.p {
            // numerically inert predictors are never moved by the solver
            if solver.direction(j).norm_squared() < path::INERT_DENOMINATOR {
                continue;
            }
            let g = rep.residuals[j];
            if pt.xi.get(j) > 0.0 {
                ensure(g.abs() <= 1e-3, || format!("active {j} at {:e}: residual {g:e}", pt.lambda))?;
            } else {
                ensure(g <= 1.0 + 1e-6, || format!("inactive {j} at {:e}: {g}", pt.lambda))?;
            }
        }
    }
    Ok(())
}

pub fn converged_points_are_local_minima(c: &Case) -> Check {
    let (mut r, ds, stack) = c.data();
    let (alpha, lambda0) = initial_fit(&stack, ds.y());
    let path = path::solve_path(&stack, ds.y(), &alpha, lambda0, &small_path_config()).unwrap();
    let y = ds.y();
    // the starting point only ties the leading gradient with the penalty, so
    // it is first-order stationary but can sit on a saddle of the Gaussian
    // criterion
    for pt in path.points.iter().skip(1).filter(|p| p.converged).step_by(3) {
        let at = fixed_alpha_objective(&stack, pt.xi.as_slice(), y, &alpha, lambda0, pt.lambda);
        for _ in 0..200 {
            let trial: Vec<f64> = pt.xi.as_slice().iter().map(|v| (v + r.random_range(-1e-3..1e-3)).max(0.0)).collect();
            let val = fixed_alpha_objective(&stack, &trial, y, &alpha, lambda0, pt.lambda);
            ensure(val >= at - 1e-9 * at.abs().max(1.0), || format!("perturbation lowered {at} to {val} at {:e}", pt.lambda))?;
        }
    }
    Ok(())
}

pub fn df_eigenvalue_identity(c: &Case) -> Check {
    let (mut r, ds, stack) = c.data();
    let xi = random_xi(&mut r, c.p, 2.0);
    let lambda0 = r.random_range(0.01..2.0);
    let s = score_point(&stack, &xi, ds.y(), lambda0).unwrap();
    let k = kernel_matrix(&stack, &xi).unwrap();
    let eig = k.matrix().clone().symmetric_eigen().eigenvalues;
    let expected: f64 = eig.iter().map(|m| m.max(0.0) / (lambda0 + m.max(0.0))).sum();
    ensure((s.df - expected).abs() <= 1e-8 * c.n as f64, || format!("df {} vs {expected}", s.df))?;
    ensure(s.df >= 0.0 && s.df <= c.n as f64 && s.rss >= 0.0, || "score out of range".into())?;
    ensure(s.bic.is_finite() || s.rss == 0.0, || "BIC not finite".into())
}

pub fn df_monotone_linear(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let ds = random_dataset(&mut r, c.n, c.p);
    let stack = build_distance_stack(&ds, KernelKind::Linear);
    let xi = random_xi(&mut r, c.p, 2.0);
    let lambda0 = r.random_range(0.01..2.0);
    let j = r.random_range(0..c.p);
    let mut bigger = xi.as_slice().to_vec();
    bigger[j] += r.random_range(0.01..1.0);
    let lo = score_point(&stack, &xi, ds.y(), lambda0).unwrap().df;
    let hi = score_point(&stack, &ScaleVector::new(bigger).unwrap(), ds.y(), lambda0).unwrap().df;
    ensure(hi >= lo - 1e-10, || format!("df fell from {lo} to {hi}"))
}

pub fn null_model_linear(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let ds = random_dataset(&mut r, c.n, c.p);
    let stack = build_distance_stack(&ds, KernelKind::Linear);
    let s = score_point(&stack, &ScaleVector::zeros(c.p), ds.y(), r.random_range(0.01..2.0)).unwrap();
    let yy = ds.y().norm_squared();
    ensure(s.df.abs() < 1e-12 && (s.rss - yy).abs() <= 1e-12 * yy, || format!("null score {s:?}"))
}

pub fn projection_idempotent(c: &Case) -> Check {
    let (mut r, ds, stack) = c.data();
    let xi = random_xi(&mut r, c.p, 2.0);
    let lambda0 = r.random_range(0.05..2.0);
    let k = kernel_matrix(&stack, &xi).unwrap();
    let alpha = kernel::lskm_fit(&k, ds.y(), lambda0).unwrap().alpha;
    let size = r.random_range(1..=c.p);
    let mut cols: Vec<usize> = (0..c.p).collect();
    for i in 0..size {
        let s = r.random_range(i..c.p);
        cols.swap(i, s);
    }
    let mut active = cols[..size].to_vec();
    active.sort_unstable();
    let rep = match ngk_incoherence(&stack, &xi, &active, &alpha, 0.1, lambda0) {
        Ok(rep) => rep,
        // a degenerate derivative block is reported, not a violation
        Err(ngk::NgkError::Singular(_)) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let pm = &rep.projection;
    ensure(max_abs(&(pm * pm - pm)) <= 1e-8, || "projection not idempotent".into())?;
    ensure(max_abs(&(pm - pm.transpose())) <= 1e-8, || "projection not symmetric".into())?;
    let z1 = DMatrix::from_fn(c.n, active.len(), |i, k| rep.z[(i, active[k])]);
    let scale = max_abs(&z1).max(1.0);
    ensure(max_abs(&(pm * &z1)) <= 1e-8 * scale, || "projection does not annihilate Z1".into())?;
    let s = &rep.sigma11;
    ensure(max_abs(&(s - s.transpose())) <= 1e-12 * max_abs(s).max(1.0), || "Sigma11 asymmetric".into())?;
    ensure(min_eig(s) >= -1e-10 * max_abs(s), || "Sigma11 not PSD".into())?;
    ensure(rep.lhs.len() == c.p - active.len(), || "lhs length".into())
}

pub fn q0_derivatives_match_differences(c: &Case) -> Check {
    let (g, h) = q0_derivative_errors(c.seed, c.kind, c.n, c.p);
    ensure(g <= 1e-5 && h <= 1e-5, || format!("gradient {g:e}, hessian {h:e}"))
}

pub fn linear_curvature_psd(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let ds = random_dataset(&mut r, c.n, c.p);
    let stack = build_distance_stack(&ds, KernelKind::Linear);
    let xi = random_xi(&mut r, c.p, 2.0);
    let m = diagnostics::mn(&stack, &xi, ds.y(), r.random_range(0.05..2.0)).unwrap();
    let lo = min_eig(&m);
    ensure(lo >= -1e-8, || format!("curvature eigenvalue {lo:e}"))
}

pub fn screen_sign_invariant(c: &Case) -> Check {
    let mut r = rng(c.seed);
    let x = DMatrix::from_fn(c.n, c.p, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..c.n).map(|_| normal(&mut r)).collect();
    let flip = r.random_range(0..c.p);
    let mut xf = x.clone();
    xf.column_mut(flip).neg_mut();
    let (Ok(a), Ok(b)) = (Dataset::from_raw(&y, &x, None), Dataset::from_raw(&y, &xf, None)) else {
        return Ok(());
    };
    let ra = nis_screen(&a, c.p).unwrap();
    let rb = nis_screen(&b, c.p).unwrap();
    ensure(ra.ranked == rb.ranked, || "ranking changed under a sign flip".into())
}

pub fn screen_structure(c: &Case) -> Check {
    let (mut r, ds, _) = c.data();
    let keep = r.random_range(1..=c.p + 2);
    let a = nis_screen(&ds, keep).unwrap();
    let b = nis_screen(&ds, keep).unwrap();
    ensure(a == b, || "screening not deterministic".into())?;
    ensure(a.kept.len() == keep.min(c.p), || "kept size".into())?;
    ensure(a.kept[..] == a.ranked[..a.kept.len()], || "kept is not a ranked prefix".into())?;
    ensure(a.ranked.windows(2).all(|w| a.scores[w[0]] <= a.scores[w[1]]), || "ranking not ascending".into())
}

pub fn pipeline_relabel_equivariant(c: &Case) -> Check {
    let (mut r, ds, _) = c.data();
    let mut perm: Vec<usize> = (0..c.p).collect();
    for i in (1..c.p).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    let permuted = ds.select_columns(&perm).unwrap();
    let mut cfg = NgkConfig::new(KernelKind::Linear);
    cfg.path = PathConfig {
        grid_size: 15,
        tol: 1e-10,
        max_sweeps: 5000,
        ..PathConfig::default()
    };
    let a = ngk::fit_ngk(&ds, &cfg).map_err(|e| e.to_string())?;
    let b = ngk::fit_ngk(&permuted, &cfg).map_err(|e| e.to_string())?;
    let crit_a = a.selection.criterion.as_ref().unwrap();
    let crit_b = b.selection.criterion.as_ref().unwrap();
    // a near tie in the criterion may legitimately break either way
    let sorted: Vec<f64> = {
        let mut v: Vec<f64> = crit_a.scores.iter().map(|s| s.bic).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    if sorted.len() > 1 && sorted[1] - sorted[0] < 1e-8 {
        return Ok(());
    }
    ensure(crit_a.chosen_index == crit_b.chosen_index, || "chosen grid point moved".into())?;
    let mut mapped: Vec<usize> = b.selected.iter().map(|&k| perm[k]).collect();
    mapped.sort_unstable();
    ensure(mapped == a.selected, || format!("{:?} vs {:?}", a.selected, mapped))
}

pub fn bootstrap_counts_consistent(c: &Case) -> Check {
    let (_, ds, _) = c.data();
    if c.n < 10 {
        return Ok(());
    }
    let mut plan = ResamplePlan::new(ResampleMode::Bootstrap, 3, c.seed);
    plan.m = Some(c.n.min(12));
    let mut cfg = NgkConfig::new(c.kind);
    cfg.path.grid_size = 8;
    let rep = match bootstrap_select(&ds, &cfg, &plan, 1) {
        Ok(rep) => rep,
        Err(ngk::NgkError::TooManyFailures { .. }) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let total: usize = rep.counts.iter().sum();
    let sizes: usize = rep.replicate_log.iter().map(|o| o.active.len()).sum();
    ensure(total == sizes, || "counts do not add up".into())?;
    for j in 0..c.p {
        ensure(rep.freq[j] == rep.counts[j] as f64 / 3.0, || "frequency is not count / replicates".into())?;
        ensure((rep.freq[j] >= plan.threshold) == rep.chosen.contains(&j), || "chosen ignores threshold".into())?;
    }
    Ok(())
}

/// Run one invariant on `cases` cases drawn from `seed`; returns the first
/// failure.
pub fn run_invariant(f: Invariant, seed: u64, cases: usize) -> Check {
    let mut r = rng(seed);
    for _ in 0..cases {
        let case = Case::draw(&mut r);
        f(&case).map_err(|e| format!("{case:?}: {e}"))?;
    }
    Ok(())
}

/// Bootstrap replicate designs satisfy the standardization invariants.
pub fn resampled_design_standardized(c: &Case) -> Check {
    let (mut r, ds, _) = c.data();
    let rows: Vec<usize> = (0..c.n).map(|_| r.random_range(0..c.n)).collect();
    let Ok(b) = ds.resample_rows(&rows) else {
        // a resample may repeat one value in some column; that is an error, not a bad design
        return Ok(());
    };
    for j in 0..b.p() {
        let col = b.x().column(j);
        ensure(col.sum().abs() < 1e-10 && (col.norm_squared() - 1.0).abs() < 1e-10, || format!("column {j}"))?;
    }
    ensure(b.y().sum().abs() < 1e-9 * b.n() as f64 * b.y().amax().max(1.0), || "response not centered".into())
}

pub fn generation_deterministic(c: &Case) -> Check {
    use ngk::bench::{generate, DesignKind, SimDesign};
    let kinds = [DesignKind::Example1, DesignKind::Example2, DesignKind::ZhaoYu];
    let kind = kinds[(c.seed % 3) as usize];
    let design = SimDesign::new(kind, c.n.max(8));
    let a = generate(&design, &mut rng(c.seed)).map_err(|e| e.to_string())?;
    let b = generate(&design, &mut rng(c.seed)).map_err(|e| e.to_string())?;
    let same = a.dataset.x() == b.dataset.x() && a.dataset.y() == b.dataset.y() && a.f_true == b.f_true;
    ensure(same, || format!("{kind} draws differ"))
}
