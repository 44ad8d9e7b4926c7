//! Delimiter-separated writers for every report the library produces.
//! Floats use the shortest round-trip representation, so repeated runs
//! give byte-identical files.

use std::io::Write;

use csv::WriterBuilder;

use crate::bench::ExperimentSummary;
use crate::diagnostics::{IncoherenceReport, SweepCell};
use crate::error::{NgkError, Result};
use nalgebra::DVector;

use crate::kernel::{KernelMachineFit, ScaleVector};
use crate::path::SolutionPath;
use crate::resampling::SelectionReport;
use crate::screening::ScreenResult;
use crate::selection::SelectionCriterion;

fn writer<W: Write>(w: W, delimiter: u8) -> csv::Writer<W> {
    WriterBuilder::new().delimiter(delimiter).from_writer(w)
}

fn csv_err(e: csv::Error) -> NgkError {
    NgkError::Output(e.to_string())
}

fn io_err(e: std::io::Error) -> NgkError {
    NgkError::Output(e.to_string())
}

fn finish<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush().map_err(io_err)
}

fn name(names: &[String], j: usize) -> String {
    names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `lambda, xi_<name>..., objective, sweeps, converged`.
pub fn write_path_table<W: Write>(w: W, path: &SolutionPath, names: &[String], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    let mut header = vec!["lambda".to_string()];
    header.extend((0..path.p()).map(|j| format!("xi_{}", name(names, j))));
    header.extend(["objective", "sweeps", "converged"].map(String::from));
    wtr.write_record(&header).map_err(csv_err)?;
    for pt in &path.points {
        let mut rec = vec![pt.lambda.to_string()];
        rec.extend(pt.xi.as_slice().iter().map(|v| v.to_string()));
        rec.push(pt.objective.to_string());
        rec.push(pt.sweeps.to_string());
        rec.push(pt.converged.to_string());
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    finish(wtr)
}

/// `lambda, rss, df, bic, active_size, chosen`.
pub fn write_criterion_table<W: Write>(w: W, path: &SolutionPath, crit: &SelectionCriterion, delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["lambda", "rss", "df", "bic", "active_size", "chosen"])
        .map_err(csv_err)?;
    for (i, (pt, s)) in path.points.iter().zip(&crit.scores).enumerate() {
        wtr.write_record([
            pt.lambda.to_string(),
            s.rss.to_string(),
            s.df.to_string(),
            s.bic.to_string(),
            pt.active_set.len().to_string(),
            (i == crit.chosen_index).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `predictor, xi, selected`.
pub fn write_scales<W: Write>(w: W, xi: &ScaleVector, names: &[String], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["predictor", "xi", "selected"]).map_err(csv_err)?;
    for (j, v) in xi.as_slice().iter().enumerate() {
        wtr.write_record([name(names, j), v.to_string(), (*v > 0.0).to_string()])
            .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `predictor, count, frequency, chosen`.
pub fn write_selection_report<W: Write>(w: W, report: &SelectionReport, names: &[String], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["predictor", "count", "frequency", "chosen"])
        .map_err(csv_err)?;
    for (j, (&c, f)) in report.counts.iter().zip(&report.freq).enumerate() {
        wtr.write_record([
            name(names, j),
            c.to_string(),
            f.to_string(),
            report.chosen.contains(&j).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `replicate, converged, error, active` with the active set space-separated.
pub fn write_replicate_log<W: Write>(w: W, report: &SelectionReport, names: &[String], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["replicate", "converged", "error", "active"])
        .map_err(csv_err)?;
    for r in &report.replicate_log {
        let active: Vec<String> = r.active.iter().map(|&j| name(names, j)).collect();
        wtr.write_record([
            r.index.to_string(),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
            active.join(" "),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `rank, predictor, score, kept`.
pub fn write_screen_report<W: Write>(w: W, sr: &ScreenResult, names: &[String], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["rank", "predictor", "score", "kept"]).map_err(csv_err)?;
    for (rank, &j) in sr.ranked.iter().enumerate() {
        wtr.write_record([
            (rank + 1).to_string(),
            name(names, j),
            sr.scores[j].to_string(),
            (rank < sr.kept.len()).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `lambda, lambda0, max_lhs, gamma_margin`.
pub fn write_sweep<W: Write>(w: W, cells: &[SweepCell], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["lambda", "lambda0", "max_lhs", "gamma_margin"])
        .map_err(csv_err)?;
    for c in cells {
        wtr.write_record([
            c.lambda.to_string(),
            c.lambda0.to_string(),
            fmt_opt(c.max_lhs),
            c.gamma_margin.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

/// One row per method in `mean(sd)` form, then the numeric columns.
pub fn write_experiment_summary<W: Write>(w: W, summaries: &[ExperimentSummary], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record([
        "design", "method", "n", "p", "runs", "failures", "unconverged_runs", "single_run", "FP", "FN", "MS", "RSS", "SE",
        "fp_mean", "fp_sd", "fn_mean", "fn_sd", "ms_mean", "ms_sd", "rss_mean", "rss_sd", "se_mean", "se_sd",
    ])
    .map_err(csv_err)?;
    for s in summaries {
        let stats = [s.fp_rate, s.fn_rate, s.model_size, s.rss, s.se];
        let mut rec = vec![
            s.design.to_string(),
            format!("{}-NGK", s.method),
            s.n.to_string(),
            s.p.to_string(),
            s.runs.to_string(),
            s.failures.to_string(),
            s.convergence_failures.to_string(),
            s.single_run.to_string(),
        ];
        rec.extend(stats.iter().map(|m| m.to_string()));
        for m in stats {
            rec.push(m.mean.to_string());
            rec.push(m.sd.to_string());
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    finish(wtr)
}

/// Per-run records: `run, fp_rate, fn_rate, model_size, rss, se, lambda0, selected`.
pub fn write_run_records<W: Write>(w: W, summary: &ExperimentSummary, delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["run", "fp_rate", "fn_rate", "model_size", "rss", "se", "lambda0", "flat_curve", "selected"])
        .map_err(csv_err)?;
    for r in &summary.records {
        let sel: Vec<String> = r.selected.iter().map(|j| format!("x{}", j + 1)).collect();
        wtr.write_record([
            r.run.to_string(),
            r.metrics.fp_rate.to_string(),
            r.metrics.fn_rate.to_string(),
            r.metrics.model_size.to_string(),
            r.metrics.rss_n.to_string(),
            fmt_opt(r.metrics.se),
            r.lambda0.to_string(),
            r.flat_curve.to_string(),
            sel.join(" "),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `row, y_centered, fitted, alpha`.
pub fn write_fit_table<W: Write>(w: W, y: &DVector<f64>, fit: &KernelMachineFit, delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["row", "y_centered", "fitted", "alpha"]).map_err(csv_err)?;
    for i in 0..y.len() {
        wtr.write_record([i.to_string(), y[i].to_string(), fit.fitted[i].to_string(), fit.alpha[i].to_string()])
            .map_err(csv_err)?;
    }
    finish(wtr)
}

/// `predictor, role, lhs, lasso_value, v`; `lasso` is aligned with the
/// report's inactive predictors.
pub fn write_incoherence<W: Write>(
    w: W,
    report: &IncoherenceReport,
    lasso: &DVector<f64>,
    names: &[String],
    delimiter: u8,
) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["predictor", "role", "lhs", "lasso_value", "v"]).map_err(csv_err)?;
    for &j in &report.active {
        wtr.write_record([name(names, j), "active".into(), "NA".into(), "NA".into(), report.v[j].to_string()])
            .map_err(csv_err)?;
    }
    for (k, &j) in report.inactive.iter().enumerate() {
        wtr.write_record([
            name(names, j),
            "inactive".into(),
            report.lhs[k].to_string(),
            lasso[k].to_string(),
            report.v[j].to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}
