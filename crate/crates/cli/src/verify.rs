//! `verify`: derivative, oracle and accounting checks on reduced settings of
//! the loaded configuration.

use std::path::Path;

use chanceopt_core::{EngineKind, TaylorGradient};

use crate::checks::{self, Check};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::Experiment;
use crate::output::OutputDir;

/// Sample count of the Gaussian chance oracle.
pub const ORACLE_SAMPLES: usize = 4096;

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Perturbs the Taylor-engine gradient before its finite-difference check.
    pub corrupt_gradient: bool,
}

/// Reduced copy of `config` used for the finite-difference checks.
pub fn small_config(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.sampling.samples = c.sampling.samples.min(64);
    c.surrogate.rank = c.surrogate.rank.min(5);
    c.surrogate.oversampling = c.surrogate.oversampling.min(5);
    c
}

pub fn run_checks(config: &ExperimentConfig, opts: VerifyOptions) -> Result<Vec<Check>, CliError> {
    let small = Experiment::new(small_config(config))?;
    let gradient: TaylorGradient = config.surrogate.gradient.into();
    let mut out = vec![
        checks::gradient_fd(
            &small,
            EngineKind::Taylor2,
            gradient,
            5,
            opts.corrupt_gradient,
        )?,
        checks::gradient_fd(&small, EngineKind::Saa, gradient, 5, false)?,
    ];
    out.extend(checks::parameter_derivatives(&small)?);
    let mut coarse = config.clone();
    coarse.mesh.n = 8;
    coarse.surrogate.rank = 5;
    let coarse = Experiment::new(coarse)?;
    let (_, within_tail) = checks::eigen_oracle(&coarse, 5, config.surrogate.oversampling)?;
    out.push(within_tail);
    out.push(checks::gaussian_chance(&small, ORACLE_SAMPLES)?);
    out.extend(checks::counter_audit(&small)?);
    out.push(checks::fem_order()?);
    Ok(out)
}

pub fn format_table(checks: &[Check]) -> String {
    let mut s = format!(
        "{:<28} {:>12} {:>12}  {}\n",
        "check", "measured", "threshold", "result"
    );
    for c in checks {
        s.push_str(&format!(
            "{:<28} {:>12.3e} {:>12.3e}  {}  {}\n",
            c.name,
            c.measured,
            c.threshold,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        ));
    }
    s
}

/// Runs the checks, prints the table, writes `verify.csv` when `out` is set,
/// and fails with the names of the failing checks.
pub fn run_verify(
    config: &ExperimentConfig,
    out: Option<&Path>,
    opts: VerifyOptions,
) -> Result<Vec<Check>, CliError> {
    let checks = run_checks(config, opts)?;
    print!("{}", format_table(&checks));
    if let Some(dir) = out {
        let d = OutputDir::create(dir)?;
        let mut w = d.csv("verify.csv")?;
        w.write_record([
            "config_hash",
            "seed",
            "check",
            "measured",
            "threshold",
            "passed",
            "detail",
        ])?;
        let hash = config.hash();
        for c in &checks {
            w.write_record([
                hash.clone(),
                config.seed.to_string(),
                c.name.clone(),
                c.measured.to_string(),
                c.threshold.to_string(),
                c.passed.to_string(),
                c.detail.clone(),
            ])?;
        }
        w.flush()?;
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}
