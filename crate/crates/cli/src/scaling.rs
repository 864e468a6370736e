//! `scaling`: the same experiment on several meshes, with the eigenvalue
//! spectrum at each optimum.

use std::path::Path;

use chanceopt_core::{build_surrogate, LowRankOptions};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::Experiment;
use crate::optimize::{run_optimize, RunReport};
use crate::output::OutputDir;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingOptions {
    /// Number of eigenvalues computed at each optimum.
    pub spectrum_rank: usize,
    /// Absolute threshold on `|lambda|` for the dimension-independence count.
    pub threshold: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            spectrum_rank: 30,
            threshold: 5e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub dim: usize,
    pub above_threshold: usize,
    pub inner_iterations: usize,
    pub outer_steps: usize,
    pub optimizer_solves: usize,
    pub eigenvalues: Vec<f64>,
}

pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    pub reports: Vec<RunReport>,
}

pub fn run_scaling(
    config: &ExperimentConfig,
    meshes: &[usize],
    opts: ScalingOptions,
    out: Option<&Path>,
) -> Result<ScalingResult, CliError> {
    let mut cfgs = Vec::new();
    for &n in meshes {
        let mut c = config.clone();
        c.mesh.n = n;
        c.validate()?;
        cfgs.push(c);
    }
    let dir = out.map(OutputDir::create).transpose()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for c in cfgs {
        let n = c.mesh.n;
        let exp = Experiment::new(c)?;
        let sub = dir.as_ref().map(|d| d.path(&format!("n{n}")));
        let outcome = run_optimize(&exp, sub.as_deref())?;
        let report = outcome.report;
        let lr = LowRankOptions {
            rank: opts.spectrum_rank.min(exp.field.dim() - 10),
            oversampling: 10,
            seed: exp.config.low_rank().seed,
        };
        let build = build_surrogate(&exp.diagnostics, &exp.field, &report.z_opt, &lr)?;
        let eigenvalues = build.surrogate.pairs.lambdas.clone();
        rows.push(ScalingRow {
            n,
            dim: exp.field.dim(),
            above_threshold: eigenvalues
                .iter()
                .filter(|l| l.abs() > opts.threshold)
                .count(),
            inner_iterations: report.steps.iter().map(|s| s.iterations).sum(),
            outer_steps: report.steps.len(),
            optimizer_solves: report.counters.optimizer.total,
            eigenvalues,
        });
        reports.push(report);
    }
    if let Some(d) = &dir {
        let hash = config.hash();
        let seed = config.seed.to_string();
        let mut w = d.csv("scaling_spectra.csv")?;
        w.write_record(["config_hash", "seed", "n", "dim", "index", "eigenvalue"])?;
        for r in &rows {
            for (i, l) in r.eigenvalues.iter().enumerate() {
                w.write_record([
                    hash.clone(),
                    seed.clone(),
                    r.n.to_string(),
                    r.dim.to_string(),
                    (i + 1).to_string(),
                    l.to_string(),
                ])?;
            }
        }
        w.flush()?;
        let mut w = d.csv("scaling_summary.csv")?;
        w.write_record([
            "config_hash",
            "seed",
            "n",
            "dim",
            "threshold",
            "above_threshold",
            "inner_iterations",
            "outer_steps",
            "optimizer_solves",
        ])?;
        for r in &rows {
            w.write_record([
                hash.clone(),
                seed.clone(),
                r.n.to_string(),
                r.dim.to_string(),
                opts.threshold.to_string(),
                r.above_threshold.to_string(),
                r.inner_iterations.to_string(),
                r.outer_steps.to_string(),
                r.optimizer_solves.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(ScalingResult { rows, reports })
}
