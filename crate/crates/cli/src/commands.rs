use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DVector;
use ngk::bench::{self, ExperimentConfig, SimDesign};
use ngk::diagnostics::{self, log_grid};
use ngk::export;
use ngk::kernel::{self, ScaleVector};
use ngk::linalg::shifted_solve;
use ngk::pipeline::default_rho;
use ngk::resampling::{replicate_rng, ResampleMode, ResamplePlan};
use ngk::{build_distance_stack, load_dataset, Dataset, NgkConfig, NgkError, PathConfig, ResponseColumn, SelectionRule};
use serde_json::{json, Value};

use crate::args::{Cli, Command, DataArgs, DiagnoseArgs, FitArgs, ModelArgs, ModelCommand, PathArgs, ResampleArgs, ScreenArgs, SimulateArgs};
use crate::CliError;

#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub results: BTreeMap<String, Value>,
    pub seed: Option<u64>,
}

impl Outcome {
    fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }
}

/// Output sink bound to the run's directory and delimiter.
struct Sink<'a> {
    cli: &'a Cli,
    outcome: Outcome,
}

impl Sink<'_> {
    fn ext(&self) -> &'static str {
        match self.cli.delimiter {
            b',' => "csv",
            b'\t' => "tsv",
            _ => "txt",
        }
    }

    fn emit<F>(&mut self, stem: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(BufWriter<File>, u8) -> ngk::Result<()>,
    {
        let name = format!("{stem}.{}", self.ext());
        let path = self.cli.out_dir.join(&name);
        let file = File::create(&path).map_err(|e| NgkError::Output(format!("{}: {e}", path.display())))?;
        write(BufWriter::new(file), self.cli.delimiter)?;
        log::info!("wrote {}", path.display());
        self.outcome.outputs.push(name);
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| NgkError::Output(format!("{}: {e}", cli.out_dir.display())))?;
    let mut sink = Sink {
        cli,
        outcome: Outcome::default(),
    };
    match &cli.command {
        Command::Fit(a) => fit(&mut sink, a)?,
        Command::Path(a) => path(&mut sink, a, false)?,
        Command::Select(a) => path(&mut sink, a, true)?,
        Command::Bootstrap(a) => resample(&mut sink, a, ResampleMode::Bootstrap)?,
        Command::Permute(a) => resample(&mut sink, a, ResampleMode::Permutation)?,
        Command::Screen(a) => screen(&mut sink, a)?,
        Command::Simulate(a) => simulate(&mut sink, a)?,
        Command::Diagnose(a) => diagnose(&mut sink, a)?,
    }
    Ok(sink.outcome)
}

fn load(cli: &Cli, data: &DataArgs) -> Result<Dataset, CliError> {
    load_from(cli, &data.input, &data.response)
}

fn load_from(cli: &Cli, input: &Path, response: &str) -> Result<Dataset, CliError> {
    let col: ResponseColumn = response.parse().expect("infallible");
    Ok(load_dataset(input, &col, cli.delimiter)?)
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage("--seed is required for stochastic subcommands".into()))
}

fn path_config(grid_size: usize, ratio: f64, lambdas: Option<Vec<f64>>, max_sweeps: usize, tol: f64, refit: bool) -> PathConfig {
    PathConfig {
        grid_size,
        lambda_min_ratio: ratio,
        lambdas,
        max_sweeps,
        tol,
        refit_alpha: refit,
    }
}

fn rule(window: Option<usize>) -> Result<SelectionRule, CliError> {
    match window {
        Some(0) => Err(CliError::Usage("--window must be at least 1".into())),
        Some(w) => Ok(SelectionRule::Window(w)),
        None => Ok(SelectionRule::MinBic),
    }
}

fn ngk_config(m: &ModelArgs) -> Result<NgkConfig, CliError> {
    if m.screen == Some(0) {
        return Err(CliError::Usage("--screen must be at least 1".into()));
    }
    Ok(NgkConfig {
        kind: m.kernel,
        rho: m.rho,
        path: path_config(m.grid_size, m.lambda_min_ratio, m.lambdas.clone(), m.max_sweeps, m.tol, m.refit_alpha),
        rule: rule(m.window)?,
        screen: m.screen,
    })
}

fn names_of(ds: &Dataset, idx: &[usize]) -> Value {
    json!(idx.iter().map(|&j| ds.column_names()[j].clone()).collect::<Vec<_>>())
}

fn fit(sink: &mut Sink, a: &FitArgs) -> Result<(), CliError> {
    let ds = load(sink.cli, &a.data)?;
    let stack = build_distance_stack(&ds, a.kernel);
    let rho = a.rho.unwrap_or_else(|| default_rho(ds.p()));
    let kmat = kernel::kernel_matrix(&stack, &ScaleVector::uniform(ds.p(), rho)?)?;
    let fit = match a.lambda0 {
        Some(l0) => kernel::lskm_fit(&kmat, ds.y(), l0)?,
        None => {
            let est = kernel::estimate_lambda0_for_kernel(&kmat, ds.y())?;
            sink.outcome.result("log_likelihood", json!(est.log_likelihood));
            sink.outcome.result("at_boundary", json!(est.at_boundary));
            est.fit
        }
    };
    sink.outcome.result("lambda0", json!(fit.lambda0));
    sink.outcome.result("sigma2", json!(fit.sigma2));
    sink.outcome.result("sigma2_alpha", json!(fit.sigma2_alpha));
    sink.outcome.result("rho", json!(rho));
    sink.outcome.result("q0", json!(kernel::q0_objective(&kmat, ds.y(), fit.lambda0)?));
    let y = ds.y().clone();
    sink.emit("fit", |w, d| export::write_fit_table(w, &y, &fit, d))
}

fn path(sink: &mut Sink, a: &ModelCommand, select: bool) -> Result<(), CliError> {
    let ds = load(sink.cli, &a.data)?;
    let cfg = ngk_config(&a.model)?;
    let fit = ngk::fit_ngk(&ds, &cfg)?;
    let local_names: Vec<String> = fit.columns.iter().map(|&c| ds.column_names()[c].clone()).collect();
    if let Some(sr) = &fit.screen {
        sink.emit("screen", |w, d| export::write_screen_report(w, sr, ds.column_names(), d))?;
    }
    sink.emit("path", |w, d| export::write_path_table(w, &fit.path, &local_names, d))?;
    let o = &mut sink.outcome;
    o.result("lambda0", json!(fit.path.lambda0));
    o.result("lambda0_at_boundary", json!(fit.lambda0.at_boundary));
    o.result("lambda_start", json!(fit.path.lambda_start.value));
    o.result("lambda_start_clamped", json!(fit.path.lambda_start.clamped));
    o.result("unconverged_points", json!(fit.path.n_unconverged()));
    o.result("entry_order", names_of(&ds, &fit.path.entry_order().iter().map(|&k| fit.columns[k]).collect::<Vec<_>>()));
    if select {
        if let Some(crit) = &fit.selection.criterion {
            sink.emit("criterion", |w, d| export::write_criterion_table(w, &fit.path, crit, d))?;
            sink.outcome.result("flat_curve", json!(crit.flat_curve));
        }
        sink.emit("scales", |w, d| export::write_scales(w, &fit.xi_full, ds.column_names(), d))?;
        let o = &mut sink.outcome;
        o.result("selected", names_of(&ds, &fit.selected));
        o.result("chosen_lambda", json!(fit.path.points[fit.selection.point_index].lambda));
    }
    Ok(())
}

fn resample(sink: &mut Sink, a: &ResampleArgs, mode: ResampleMode) -> Result<(), CliError> {
    let seed = require_seed(a.seed)?;
    sink.outcome.seed = Some(seed);
    if mode == ResampleMode::Permutation && a.m.is_some() {
        return Err(CliError::Usage("--m applies to bootstrap only".into()));
    }
    let ds = load(sink.cli, &a.data)?;
    let cfg = ngk_config(&a.model)?;
    let mut plan = ResamplePlan::new(mode, a.replicates, seed);
    plan.m = a.m;
    plan.rule = cfg.rule;
    plan.threshold = a.threshold;
    let report = match mode {
        ResampleMode::Bootstrap => ngk::bootstrap_select(&ds, &cfg, &plan, sink.cli.jobs)?,
        ResampleMode::Permutation => ngk::permutation_select(&ds, &cfg, &plan, sink.cli.jobs)?,
    };
    sink.emit("selection", |w, d| export::write_selection_report(w, &report, ds.column_names(), d))?;
    sink.emit("replicates", |w, d| export::write_replicate_log(w, &report, ds.column_names(), d))?;
    let o = &mut sink.outcome;
    o.result("chosen", names_of(&ds, &report.chosen));
    o.result("failures", json!(report.failures));
    if mode == ResampleMode::Bootstrap {
        o.result("m", json!(plan.subsample_size(ds.n())));
    }
    if let Some(init) = &report.initial_active {
        o.result("initial_active", names_of(&ds, init));
    }
    if let Some(l0) = report.lambda0 {
        o.result("fixed_lambda0", json!(l0));
    }
    Ok(())
}

fn screen(sink: &mut Sink, a: &ScreenArgs) -> Result<(), CliError> {
    let ds = load(sink.cli, &a.data)?;
    let sr = ngk::nis_screen(&ds, a.screen)?;
    sink.emit("screen", |w, d| export::write_screen_report(w, &sr, ds.column_names(), d))?;
    sink.outcome.result("kept", names_of(&ds, &sr.kept));
    Ok(())
}

fn simulate_config(p: &PathArgs) -> Result<(PathConfig, SelectionRule), CliError> {
    Ok((
        path_config(p.grid_size, p.lambda_min_ratio, None, p.max_sweeps, p.tol, false),
        rule(p.window)?,
    ))
}

fn simulate(sink: &mut Sink, a: &SimulateArgs) -> Result<(), CliError> {
    let seed = require_seed(a.seed)?;
    sink.outcome.seed = Some(seed);
    let mut design = SimDesign::new(a.design, a.n);
    if let Some(p) = a.p {
        design = design.with_p(p);
    }
    design.validate()?;
    let (path, rule) = simulate_config(&a.path)?;
    let mut summaries = Vec::new();
    for &kind in &a.kernels {
        let mut cfg = ExperimentConfig::new(kind, a.runs, seed);
        cfg.ngk.path = path.clone();
        cfg.ngk.rule = rule;
        cfg.ngk.rho = a.path.rho;
        cfg.jobs = sink.cli.jobs;
        summaries.push(bench::run_experiment(&design, &cfg)?);
    }
    sink.emit("summary", |w, d| export::write_experiment_summary(w, &summaries, d))?;
    for s in &summaries {
        sink.emit(&format!("runs-{}", s.method), |w, d| export::write_run_records(w, s, d))?;
    }
    sink.outcome.result("design_p", json!(design.p));
    sink.outcome.result("truth_active", json!(design.truth_active()));
    Ok(())
}

fn diagnose(sink: &mut Sink, a: &DiagnoseArgs) -> Result<(), CliError> {
    let (ds, truth) = match (&a.design, &a.input) {
        (Some(kind), None) => {
            let seed = require_seed(a.seed)?;
            sink.outcome.seed = Some(seed);
            let design = SimDesign::new(*kind, a.n);
            let sim = bench::generate(&design, &mut replicate_rng(seed, 0))?;
            (sim.dataset, Some(sim.truth_active))
        }
        (None, Some(input)) => (load_from(sink.cli, input, &a.response)?, None),
        _ => return Err(CliError::Usage("diagnose needs exactly one of --design or --input".into())),
    };
    let active = a
        .active
        .clone()
        .or(truth)
        .ok_or_else(|| CliError::Usage("--active is required with --input".into()))?;
    let stack = build_distance_stack(&ds, a.kernel);
    let xi_ref = ScaleVector::uniform(ds.p(), a.xi_ref)?;
    let lambda0 = match a.lambda0 {
        Some(l) => l,
        None => kernel::estimate_lambda0(&stack, ds.y(), default_rho(ds.p()))?.fit.lambda0,
    };
    let alpha: DVector<f64> = shifted_solve(kernel::kernel_matrix(&stack, &xi_ref)?.matrix(), lambda0, ds.y())?;
    let report = diagnostics::ngk_incoherence(&stack, &xi_ref, &active, &alpha, a.lambda, lambda0)?;
    let signs = vec![1.0; active.len()];
    let lasso = diagnostics::lasso_incoherence(&ds, &active, &signs)?;
    let bound = diagnostics::theorem2_bound(&report, a.lambda, lambda0, a.sigma, active.len(), ds.n())?;

    let names = ds.column_names().to_vec();
    sink.emit("incoherence", |w, d| export::write_incoherence(w, &report, &lasso, &names, d))?;

    if a.sweep_lambda || a.sweep_lambda0 {
        let lambdas = if a.sweep_lambda {
            log_grid(a.lambda_range.high, a.lambda_range.low, a.lambda_range.count)
        } else {
            vec![a.lambda]
        };
        let lambda0s = if a.sweep_lambda0 {
            log_grid(a.lambda0_range.high, a.lambda0_range.low, a.lambda0_range.count)
        } else {
            vec![lambda0]
        };
        let cells = diagnostics::incoherence_sweep(&stack, ds.y(), &xi_ref, &active, &lambdas, &lambda0s)?;
        let satisfied = cells.iter().filter(|c| c.max_lhs.is_none_or(|m| m < 1.0)).count();
        sink.emit("sweep", |w, d| export::write_sweep(w, &cells, d))?;
        sink.outcome.result("sweep_cells", json!(cells.len()));
        sink.outcome.result("sweep_cells_satisfied", json!(satisfied));
    }
    let o = &mut sink.outcome;
    o.result("lambda0", json!(lambda0));
    o.result("max_lhs", json!(report.max_lhs()));
    o.result("gamma_margin", json!(report.gamma_margin));
    o.result("c_min", json!(report.c_min));
    o.result("rho_bound", json!(bound));
    o.result("lasso_max", json!(lasso.iter().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))));
    o.result("active", names_of(&ds, &report.active));
    Ok(())
}

