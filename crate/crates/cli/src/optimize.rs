//! `optimize`: continuation solve with per-step chance diagnostics.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chanceopt_core::optimizer::{InnerStatus, OuterStep};
use chanceopt_core::{continuation_solve, ChanceMode, ChanceSource, CostGradEngine, SolveCounts};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{all_estimates, EstimateRecord, Experiment};
use crate::output::{write_json, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurrogateError {
    pub source: &'static str,
    /// `|chance_T - chance_full|`, both smoothed with the step's beta.
    pub smoothed_error: f64,
    pub indicator_error: f64,
    /// Median of `|f - T f|` over the samples.
    pub median_abs_error: f64,
}

/// A continuation step and its diagnostics at
/// the step's optimum on the shared sample set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub beta: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub status: &'static str,
    pub failure: Option<String>,
    pub cost: f64,
    /// Chance seen by the optimizing engine.
    pub engine_chance: f64,
    pub z: Vec<f64>,
    pub estimates: Vec<EstimateRecord>,
    pub surrogate_errors: Vec<SurrogateError>,
    pub saa_bias: f64,
    pub eigenvalues: Vec<f64>,
}

impl StepRecord {
    pub fn estimate(&self, source: ChanceSource, smoothed: bool) -> &EstimateRecord {
        let mode = if smoothed { "smoothed" } else { "indicator" };
        self.estimates
            .iter()
            .find(|e| e.source == source.label() && e.mode == mode)
            .expect("all sources are recorded")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Solves {
    pub state: usize,
    pub linearized: usize,
    pub total: usize,
}

impl From<SolveCounts> for Solves {
    fn from(c: SolveCounts) -> Self {
        Self {
            state: c.state,
            linearized: c.linearized,
            total: c.total(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counters {
    /// All solves spent by the optimizer.
    pub optimizer: Solves,
    pub evaluations: usize,
    /// Solves of one cost and gradient evaluation at `z0`.
    pub per_pass: Solves,
    /// The SAA engine's `M` state and `M` adjoint solves per pass.
    pub saa_per_pass: usize,
    pub speedup_vs_saa: f64,
    /// Solves spent on the diagnostics, not counted in `optimizer`.
    pub diagnostics: Solves,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub status: &'static str,
    pub error: Option<String>,
    pub z_opt: Vec<f64>,
    /// Chance at `z_opt` by all four evaluators.
    pub final_estimates: Vec<EstimateRecord>,
    pub steps: Vec<StepRecord>,
    pub counters: Counters,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub wall_seconds: f64,
}

fn status_label(s: InnerStatus) -> &'static str {
    match s {
        InnerStatus::Converged => "converged",
        InnerStatus::IterationLimit => "iteration_limit",
        InnerStatus::LineSearchFailed => "line_search_failed",
    }
}

fn diagnose(exp: &Experiment, step: &OuterStep) -> Result<StepRecord, CliError> {
    let beta = step.smoothing.beta;
    let values = exp.constraint_values(&step.z)?;
    let estimates = all_estimates(&values, beta, exp.seed())?;
    let full_s = values
        .estimate(ChanceSource::FullModel, ChanceMode::Smoothed(beta))?
        .value;
    let full_i = values
        .estimate(ChanceSource::FullModel, ChanceMode::Indicator)?
        .value;
    let mut surrogate_errors = Vec::new();
    for (k, source) in [ChanceSource::T0, ChanceSource::T1, ChanceSource::T2]
        .into_iter()
        .enumerate()
    {
        surrogate_errors.push(SurrogateError {
            source: source.label(),
            smoothed_error: (values.estimate(source, ChanceMode::Smoothed(beta))?.value - full_s)
                .abs(),
            indicator_error: (values.estimate(source, ChanceMode::Indicator)?.value - full_i).abs(),
            median_abs_error: values.median_error(k),
        });
    }
    Ok(StepRecord {
        step: step.step,
        beta,
        gamma: step.smoothing.gamma,
        iterations: step.iterations,
        status: status_label(step.status),
        failure: step.failure.as_ref().map(|e| e.to_string()),
        cost: step.cost,
        engine_chance: step.chance,
        z: step.z.clone(),
        estimates,
        surrogate_errors,
        saa_bias: values.saa_bias(beta)?,
        eigenvalues: values.build.surrogate.pairs.lambdas.clone(),
    })
}

const STEP_HEADER: [&str; 13] = [
    "config_hash",
    "seed",
    "step",
    "beta",
    "gamma",
    "iterations",
    "source",
    "mode",
    "samples",
    "value",
    "std_error",
    "abs_error_vs_full",
    "median_abs_f_error",
];

fn write_step_rows(w: &mut csv::Writer<File>, hash: &str, r: &StepRecord) -> Result<(), CliError> {
    for e in &r.estimates {
        let full = r
            .estimates
            .iter()
            .find(|f| f.source == "full" && f.mode == e.mode)
            .expect("full recorded");
        let median = r
            .surrogate_errors
            .iter()
            .find(|s| s.source == e.source)
            .map(|s| s.median_abs_error.to_string())
            .unwrap_or_default();
        w.write_record([
            hash.to_string(),
            e.seed.to_string(),
            r.step.to_string(),
            r.beta.to_string(),
            r.gamma.to_string(),
            r.iterations.to_string(),
            e.source.to_string(),
            e.mode.to_string(),
            e.samples.to_string(),
            e.value.to_string(),
            e.std_error.to_string(),
            (e.value - full.value).abs().to_string(),
            median,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the continuation solve. With `out` set, `steps.csv` is written as the
/// steps complete, and `trace.csv`, `z_opt.csv`, `report.json` and
/// `timing.json` at the end; a solver failure still flushes everything
/// produced so far before the error is returned.
pub fn run_optimize(exp: &Experiment, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    let started = std::time::Instant::now();
    let dir = out.map(OutputDir::create).transpose()?;
    let mut steps_csv = match &dir {
        Some(d) => {
            let mut w = d.csv("steps.csv")?;
            w.write_record(STEP_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let z0 = exp.config.z0();
    let mut engine = exp.engine()?;
    let diag_start = exp.diagnostics.counter().counts();
    let mut records: Vec<StepRecord> = Vec::new();
    let mut after = |step: &OuterStep, _: &CostGradEngine<'_>| -> chanceopt_core::Result<()> {
        let r = diagnose(exp, step).map_err(|e| match e {
            CliError::Solver(s) => s,
            other => chanceopt_core::Error::InvalidArgument(other.to_string()),
        })?;
        if let Some(w) = steps_csv.as_mut() {
            write_step_rows(w, &exp.hash, &r)
                .map_err(|e| chanceopt_core::Error::InvalidArgument(e.to_string()))?;
        }
        records.push(r);
        Ok(())
    };
    let start = exp.problem.counter().counts();
    let result = continuation_solve(&mut engine, &exp.config.schedule(), &z0, &mut after);
    let optimizer = exp.problem.counter().counts().since(start);
    let diagnostics = exp.diagnostics.counter().counts().since(diag_start);

    let (trace, z_opt, error) = match result {
        Ok(r) => (r.trace, r.z, None),
        Err(e) => {
            let z = records.last().map(|r| r.z.clone()).unwrap_or(z0.clone());
            (Default::default(), z, Some(e))
        }
    };
    let per_pass: SolveCounts = trace.rows.first().map(|r| r.solves).unwrap_or_default();
    let saa_per_pass = 2 * exp.samples.len();
    let per_pass_total = per_pass.total();
    let counters = Counters {
        optimizer: optimizer.into(),
        evaluations: trace.rows.len(),
        per_pass: per_pass.into(),
        saa_per_pass,
        speedup_vs_saa: if per_pass_total > 0 {
            saa_per_pass as f64 / per_pass_total as f64
        } else {
            0.0
        },
        diagnostics: diagnostics.into(),
    };
    let report = RunReport {
        config_hash: exp.hash.clone(),
        seed: exp.seed(),
        config: exp.config.clone(),
        status: if error.is_some() {
            "solver_failure"
        } else {
            "ok"
        },
        error: error.as_ref().map(|e| e.to_string()),
        z_opt: z_opt.clone(),
        final_estimates: records
            .last()
            .map(|r| r.estimates.clone())
            .unwrap_or_default(),
        steps: records,
        counters,
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    if let Some(d) = &dir {
        let mut w = d.csv("trace.csv")?;
        w.write_record([
            "config_hash",
            "seed",
            "outer",
            "inner",
            "cost",
            "projected_grad_norm",
            "chance",
            "state_solves",
            "linearized_solves",
            "beta",
            "gamma",
        ])?;
        for r in &trace.rows {
            w.write_record([
                exp.hash.clone(),
                exp.seed().to_string(),
                r.outer.to_string(),
                r.inner.to_string(),
                r.cost.to_string(),
                r.projected_grad_norm.to_string(),
                r.chance.to_string(),
                r.solves.state.to_string(),
                r.solves.linearized.to_string(),
                r.beta.to_string(),
                r.gamma.to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = d.csv("z_opt.csv")?;
        w.write_record(["config_hash", "seed", "well", "x", "y", "z"])?;
        for (l, (p, zl)) in exp.problem.params().wells.iter().zip(&z_opt).enumerate() {
            w.write_record([
                exp.hash.clone(),
                exp.seed().to_string(),
                l.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                zl.to_string(),
            ])?;
        }
        w.flush()?;
        write_json(&d.path("report.json"), &report)?;
        let mut t = File::create(d.path("timing.json"))?;
        writeln!(
            t,
            "{{\"config_hash\": \"{}\", \"seed\": {}, \"wall_seconds\": {wall_seconds}}}",
            exp.hash,
            exp.seed()
        )?;
    }
    if let Some(e) = error {
        return Err(CliError::Solver(e));
    }
    Ok(RunOutcome {
        report,
        wall_seconds,
    })
}

/// Builds the experiment for `config` and optimizes it.
pub fn optimize_config(
    config: ExperimentConfig,
    out: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let exp = Experiment::new(config)?;
    run_optimize(&exp, out)
}
