//! Selection frequencies from m-out-of-n bootstrap and residual permutation.
//!
//! Every replicate draws from its own ChaCha stream (root seed, stream =
//! replicate index), so reports do not depend on the worker count.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, DistanceStack};
use crate::error::{NgkError, Result};
use crate::kernel::{self, kernel_matrix};
use crate::pipeline::{fit_ngk, fit_ngk_fixed, NgkConfig};
use crate::selection::SelectionRule;

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Independent generator for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Evaluate `f(0..count)` on a pool of `jobs` workers, results in index order.
pub fn run_indexed<T, F>(jobs: usize, count: usize, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| NgkError::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    Bootstrap,
    Permutation,
}

impl ResampleMode {
    pub fn name(self) -> &'static str {
        match self {
            ResampleMode::Bootstrap => "bootstrap",
            ResampleMode::Permutation => "permutation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub mode: ResampleMode,
    pub replicates: usize,
    /// Bootstrap subsample size; `n / 2` rounded when unset.
    pub m: Option<usize>,
    pub seed: u64,
    pub rule: SelectionRule,
    /// Selection-probability cutoff for the final report.
    pub threshold: f64,
}

impl ResamplePlan {
    pub fn new(mode: ResampleMode, replicates: usize, seed: u64) -> Self {
        ResamplePlan {
            mode,
            replicates,
            m: None,
            seed,
            rule: SelectionRule::MinBic,
            threshold: 0.6,
        }
    }

    pub fn subsample_size(&self, n: usize) -> usize {
        self.m.unwrap_or(((n as f64) / 2.0).round() as usize)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(NgkError::InvalidInput("replicates must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(NgkError::InvalidInput(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.mode == ResampleMode::Bootstrap {
            let m = self.subsample_size(n);
            if m < 2 || m > n {
                return Err(NgkError::InvalidInput(format!(
                    "bootstrap size must lie in [2, {n}], got {m}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub index: usize,
    /// Selected original column indices (empty on failure).
    pub active: Vec<usize>,
    /// Every path point converged.
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub mode: ResampleMode,
    pub replicates: usize,
    pub counts: Vec<usize>,
    /// `counts / replicates`.
    pub freq: Vec<f64>,
    pub threshold: f64,
    /// Indices with `freq >= threshold`.
    pub chosen: Vec<usize>,
    pub failures: usize,
    pub replicate_log: Vec<ReplicateOutcome>,
    /// Active set of the initial fit (permutation only).
    pub initial_active: Option<Vec<usize>>,
    /// Smoothing parameter held fixed across replicates (permutation only).
    pub lambda0: Option<f64>,
}

fn aggregate(
    mode: ResampleMode,
    p: usize,
    plan: &ResamplePlan,
    outcomes: Vec<Result<(Vec<usize>, bool)>>,
) -> Result<SelectionReport> {
    let mut counts = vec![0usize; p];
    let mut log = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for (index, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok((active, converged)) => {
                for &j in &active {
                    counts[j] += 1;
                }
                log.push(ReplicateOutcome {
                    index,
                    active,
                    converged,
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("replicate {index} failed: {e}");
                failures += 1;
                log.push(ReplicateOutcome {
                    index,
                    active: Vec::new(),
                    converged: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * plan.replicates as f64 {
        let first = log.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        log::error!("too many failed replicates; first error: {first}");
        return Err(NgkError::TooManyFailures {
            failed: failures,
            total: plan.replicates,
        });
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / plan.replicates as f64).collect();
    let chosen = (0..p).filter(|&j| freq[j] >= plan.threshold).collect();
    Ok(SelectionReport {
        mode,
        replicates: plan.replicates,
        counts,
        freq,
        threshold: plan.threshold,
        chosen,
        failures,
        replicate_log: log,
        initial_active: None,
        lambda0: None,
    })
}

/// m-out-of-n bootstrap: resample rows with replacement, restandardize,
/// re-estimate the smoothing parameter and rerun NGK on each replicate.
pub fn bootstrap_select(ds: &Dataset, cfg: &NgkConfig, plan: &ResamplePlan, jobs: usize) -> Result<SelectionReport> {
    plan.validate(ds.n())?;
    cfg.path.validate()?;
    let m = plan.subsample_size(ds.n());
    let mut rcfg = cfg.clone();
    rcfg.rule = plan.rule;
    let outcomes = run_indexed(jobs, plan.replicates, |r| {
        let mut rng = replicate_rng(plan.seed, r as u64);
        let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..ds.n())).collect();
        let sample = ds.resample_rows(&rows)?;
        let fit = fit_ngk(&sample, &rcfg)?;
        Ok((fit.selected, fit.path.n_unconverged() == 0))
    })?;
    aggregate(ResampleMode::Bootstrap, ds.p(), plan, outcomes)
}

/// Refit used by the residual permutation procedure.
#[derive(Debug, Clone)]
pub struct PermutationModel {
    pub cfg: NgkConfig,
    pub p: usize,
    pub columns: Vec<usize>,
    pub stack: DistanceStack,
    pub initial_active: Vec<usize>,
    /// Refit coefficients, fixed across replicates.
    pub alpha: DVector<f64>,
    /// Refit smoothing parameter, fixed across replicates.
    pub lambda0: f64,
    pub fitted: DVector<f64>,
    /// Centered residuals of the refit.
    pub residuals: DVector<f64>,
}

impl PermutationModel {
    /// Run NGK, then refit the kernel machine at the selected scales with a
    /// fresh likelihood estimate of the smoothing parameter.
    pub fn fit(ds: &Dataset, cfg: &NgkConfig) -> Result<Self> {
        let fit = fit_ngk(ds, cfg)?;
        if fit.selected.is_empty() {
            return Err(NgkError::NullInitialModel);
        }
        let kmat = kernel_matrix(&fit.stack, &fit.selection.xi)?;
        let est = kernel::estimate_lambda0_for_kernel(&kmat, ds.y())?;
        let fitted = est.fit.fitted.clone();
        let mut residuals = ds.y() - &fitted;
        let mean = residuals.mean();
        residuals.add_scalar_mut(-mean);
        Ok(PermutationModel {
            cfg: cfg.clone(),
            p: ds.p(),
            columns: fit.columns,
            stack: fit.stack,
            initial_active: fit.selected,
            alpha: est.fit.alpha,
            lambda0: est.fit.lambda0,
            fitted,
            residuals,
        })
    }

    /// Centered response `fitted + residuals[perm]`.
    pub fn replicate_response(&self, perm: &[usize]) -> DVector<f64> {
        let mut y = DVector::from_fn(self.fitted.len(), |i, _| self.fitted[i] + self.residuals[perm[i]]);
        let mean = y.mean();
        y.add_scalar_mut(-mean);
        y
    }

    /// NGK on a new response with the refit coefficients and smoothing
    /// parameter held fixed.
    pub fn select(&self, y: &DVector<f64>, rule: SelectionRule) -> Result<(Vec<usize>, bool)> {
        let mut cfg = self.cfg.clone();
        cfg.rule = rule;
        let (path, _, selected) = fit_ngk_fixed(y, self.p, &self.columns, &self.stack, &self.alpha, self.lambda0, &cfg)?;
        Ok((selected, path.n_unconverged() == 0))
    }

    pub fn run(&self, plan: &ResamplePlan, jobs: usize) -> Result<SelectionReport> {
        plan.validate(self.fitted.len())?;
        let n = self.fitted.len();
        let outcomes = run_indexed(jobs, plan.replicates, |r| {
            let mut rng = replicate_rng(plan.seed, r as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            self.select(&self.replicate_response(&perm), plan.rule)
        })?;
        let mut report = aggregate(ResampleMode::Permutation, self.p, plan, outcomes)?;
        report.initial_active = Some(self.initial_active.clone());
        report.lambda0 = Some(self.lambda0);
        Ok(report)
    }
}

/// Residual permutation: refit once, then rerun NGK on permuted-residual
/// responses with the refit held fixed.
pub fn permutation_select(ds: &Dataset, cfg: &NgkConfig, plan: &ResamplePlan, jobs: usize) -> Result<SelectionReport> {
    plan.validate(ds.n())?;
    cfg.path.validate()?;
    PermutationModel::fit(ds, cfg)?.run(plan, jobs)
}
