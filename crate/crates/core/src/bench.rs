//! Simulation designs and replicated experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{distance_stack_from_matrix, standardize_columns, Dataset, KernelKind};
use crate::error::{NgkError, Result};
use crate::kernel::{kernel_matrix, ScaleVector};
use crate::linalg::select_columns;
use crate::pipeline::{fit_ngk, NgkConfig};
use crate::resampling::{replicate_rng, run_indexed};
use crate::selection::{compute_metrics, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// Gaussian-process response with a few relevant Gaussian scales.
    Example1,
    /// Fixed nonadditive function of five uniform predictors.
    Example2,
    /// Same function as `Example2` with many decoys and small n.
    Example3,
    /// Three correlated linear predictors; the third is irrelevant.
    ZhaoYu,
    /// Linear keys hidden among many Gaussian decoys.
    ScaSynthetic,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Example1 => "example-1",
            DesignKind::Example2 => "example-2",
            DesignKind::Example3 => "example-3",
            DesignKind::ZhaoYu => "zhao-yu",
            DesignKind::ScaSynthetic => "sca-synthetic",
        }
    }
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DesignKind {
    type Err = NgkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "example-1" | "example1" | "ex1" => Ok(DesignKind::Example1),
            "example-2" | "example2" | "ex2" => Ok(DesignKind::Example2),
            "example-3" | "example3" | "ex3" => Ok(DesignKind::Example3),
            "zhao-yu" | "zhaoyu" => Ok(DesignKind::ZhaoYu),
            "sca-synthetic" | "sca" => Ok(DesignKind::ScaSynthetic),
            other => Err(NgkError::InvalidInput(format!("unknown design `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    /// Number of relevant predictors (the first `a` columns).
    pub a: usize,
    /// Noise variance.
    pub sigma2: f64,
    /// Signal variance of the Gaussian-process draw.
    pub sigma2_alpha: f64,
    /// Common true scale of the relevant predictors (example 1).
    pub xi_star: f64,
    /// Mixing weights of `x3 = a x1 + b x2 + c e` (Zhao-Yu).
    pub mixing: (f64, f64, f64),
    /// Coefficient on each key column (sca-synthetic).
    pub key_coef: f64,
}

impl SimDesign {
    /// Defaults of each design at sample size `n`.
    pub fn new(kind: DesignKind, n: usize) -> Self {
        let (p, a) = match kind {
            DesignKind::Example1 => (11, 5),
            DesignKind::Example2 => (10, 5),
            DesignKind::Example3 => (80, 5),
            DesignKind::ZhaoYu => (3, 2),
            DesignKind::ScaSynthetic => (500, 16),
        };
        SimDesign {
            kind,
            n,
            p,
            a,
            sigma2: 1.0,
            sigma2_alpha: 10.0,
            xi_star: 2.0,
            mixing: (2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0),
            key_coef: 1.0,
        }
    }

    pub fn with_p(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NgkError::InvalidInput(m));
        if self.n < 2 {
            return bad(format!("design needs n >= 2, got {}", self.n));
        }
        if self.a > self.p || self.p == 0 {
            return bad(format!("design needs 1 <= p and a <= p (a = {}, p = {})", self.a, self.p));
        }
        if !(self.sigma2 > 0.0 && self.sigma2_alpha > 0.0) {
            return bad("variances must be positive".into());
        }
        match self.kind {
            DesignKind::ZhaoYu if self.p != 3 || self.a != 2 => bad("zhao-yu design has p = 3, a = 2".into()),
            DesignKind::Example2 | DesignKind::Example3 if self.a != 5 || self.p < 5 => {
                bad("examples 2 and 3 have exactly five relevant predictors".into())
            }
            _ => Ok(()),
        }
    }

    pub fn truth_active(&self) -> Vec<usize> {
        (0..self.a).collect()
    }

    /// True scale vector (example 1).
    pub fn xi_true(&self) -> Vec<f64> {
        (0..self.p).map(|j| if j < self.a { self.xi_star } else { 0.0 }).collect()
    }
}

/// Nonadditive test function of examples 2 and 3, on raw predictor values.
pub fn example2_function(x: &[f64]) -> f64 {
    10.0 * x[0].cos() + 3.0 * x[1] * x[1] + 5.0 * x[2].sin() + 6.0 * (x[3] / 3.0).exp() * x[3]
        + 8.0 * x[4].cos()
        + x[4] * x[1] * x[0]
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    /// True mean function shifted by the response mean, so it is directly
    /// comparable with fits to the centered response.
    pub f_true: DVector<f64>,
    pub truth_active: Vec<usize>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate(design: &SimDesign, rng: &mut ChaCha8Rng) -> Result<Simulated> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let noise_sd = design.sigma2.sqrt();
    let (x, f): (DMatrix<f64>, DVector<f64>) = match design.kind {
        DesignKind::Example1 => {
            let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.5..2.5));
            // the process lives on the standardized design
            let (xs, _) = standardize_columns(&x, &[])?;
            let stack = distance_stack_from_matrix(&xs, KernelKind::Gaussian);
            let k = kernel_matrix(&stack, &ScaleVector::new(design.xi_true())?)?;
            let cov = k.matrix() * design.sigma2_alpha;
            let l = gp_factor(&cov)?;
            let z = DVector::from_fn(n, |_, _| normal(rng));
            (x, l * z)
        }
        DesignKind::Example2 | DesignKind::Example3 => {
            let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
            let f = DVector::from_fn(n, |i, _| {
                let row: Vec<f64> = (0..5).map(|j| x[(i, j)]).collect();
                example2_function(&row)
            });
            (x, f)
        }
        DesignKind::ZhaoYu => {
            let (a, b, c) = design.mixing;
            let mut x = DMatrix::zeros(n, 3);
            for i in 0..n {
                let x1 = normal(rng);
                let x2 = normal(rng);
                let e = normal(rng);
                x[(i, 0)] = x1;
                x[(i, 1)] = x2;
                x[(i, 2)] = a * x1 + b * x2 + c * e;
            }
            let f = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] + 3.0 * x[(i, 1)]);
            (x, f)
        }
        DesignKind::ScaSynthetic => {
            let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
            let keys = select_columns(&x, &design.truth_active());
            let f = DVector::from_fn(n, |i, _| design.key_coef * keys.row(i).sum());
            (x, f)
        }
    };
    let eps = DVector::from_fn(n, |_, _| noise_sd * normal(rng));
    let y = &f + eps;
    let dataset = Dataset::from_raw(y.as_slice(), &x, None)?;
    let f_true = f.add_scalar(-dataset.y_mean());
    Ok(Simulated {
        dataset,
        f_true,
        truth_active: design.truth_active(),
    })
}

/// Cholesky factor for the process draw, with one jitter escalation.
fn gp_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for jitter in [0.0, 1e-10, 1e-8] {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c.l());
        }
    }
    Err(NgkError::Singular("process covariance is not positive definite".into()))
}

/// Mean and standard deviation (n - 1 denominator; 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> MeanSd {
        if values.is_empty() {
            return MeanSd { mean: f64::NAN, sd: f64::NAN };
        }
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean: m, sd }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}({:.2})", self.mean, self.sd)
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub metrics: Metrics,
    pub selected: Vec<usize>,
    pub lambda0: f64,
    pub unconverged_points: usize,
    pub flat_curve: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub design: DesignKind,
    pub method: KernelKind,
    pub n: usize,
    pub p: usize,
    pub runs: usize,
    pub failures: usize,
    /// Runs with at least one unconverged path point.
    pub convergence_failures: usize,
    pub single_run: bool,
    pub fp_rate: MeanSd,
    pub fn_rate: MeanSd,
    pub model_size: MeanSd,
    pub rss: MeanSd,
    pub se: MeanSd,
    /// Fraction of successful runs selecting each predictor.
    pub selection_freq: Vec<f64>,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Per-run NGK settings; its kernel is the method under test.
    pub ngk: NgkConfig,
    pub runs: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(method: KernelKind, runs: usize, seed: u64) -> Self {
        ExperimentConfig {
            ngk: NgkConfig::new(method),
            runs,
            seed,
            jobs: 1,
        }
    }
}

fn one_run(design: &SimDesign, cfg: &ExperimentConfig, run: usize) -> Result<RunRecord> {
    let mut rng = replicate_rng(cfg.seed, run as u64);
    let sim = generate(design, &mut rng)?;
    let fit = fit_ngk(&sim.dataset, &cfg.ngk)?;
    let metrics = compute_metrics(
        &fit.selection.xi,
        &sim.truth_active,
        Some(&sim.f_true),
        &fit.stack,
        sim.dataset.y(),
        fit.path.lambda0,
    )?;
    Ok(RunRecord {
        run,
        metrics,
        selected: fit.selected,
        lambda0: fit.path.lambda0,
        unconverged_points: fit.path.n_unconverged(),
        flat_curve: fit.selection.criterion.as_ref().is_some_and(|c| c.flat_curve),
    })
}

/// Generate, fit and score `runs` independent data sets.
pub fn run_experiment(design: &SimDesign, cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    design.validate()?;
    if cfg.runs == 0 {
        return Err(NgkError::InvalidInput("runs must be at least 1".into()));
    }
    let outcomes = run_indexed(cfg.jobs, cfg.runs, |run| one_run(design, cfg, run))?;
    let mut records = Vec::new();
    let mut failures = 0;
    for (run, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("run {run} failed: {e}");
                failures += 1;
            }
        }
    }
    if records.is_empty() {
        return Err(NgkError::Numerical(format!("all {failures} runs failed")));
    }
    let col = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let mut freq = vec![0.0; design.p];
    for r in &records {
        for &j in &r.selected {
            freq[j] += 1.0;
        }
    }
    freq.iter_mut().for_each(|v| *v /= records.len() as f64);
    Ok(ExperimentSummary {
        design: design.kind,
        method: cfg.ngk.kind,
        n: design.n,
        p: design.p,
        runs: cfg.runs,
        failures,
        convergence_failures: records.iter().filter(|r| r.unconverged_points > 0).count(),
        single_run: records.len() == 1,
        fp_rate: MeanSd::of(&col(&|r| r.metrics.fp_rate)),
        fn_rate: MeanSd::of(&col(&|r| r.metrics.fn_rate)),
        model_size: MeanSd::of(&col(&|r| r.metrics.model_size as f64)),
        rss: MeanSd::of(&col(&|r| r.metrics.rss_n)),
        se: MeanSd::of(&col(&|r| r.metrics.se.unwrap_or(f64::NAN))),
        selection_freq: freq,
        records,
    })
}
