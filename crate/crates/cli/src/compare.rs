//! `compare-chance`: chance estimates at one design for growing nested
//! sample prefixes, by every source in both modes.

use std::path::Path;

use chanceopt_core::{ChanceEstimate, ChanceMode, ChanceSource};
use serde::Serialize;

use crate::error::CliError;
use crate::experiment::Experiment;
use crate::output::OutputDir;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub samples: usize,
    pub source: &'static str,
    pub mode: &'static str,
    pub beta: Option<f64>,
    pub value: f64,
    pub std_error: f64,
}

/// `16, 32, 64, ...` up to `max`, with `max` itself always last.
pub fn sample_ladder(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut m = 16;
    while m < max {
        out.push(m);
        m *= 2;
    }
    out.push(max);
    out
}

pub fn run_compare_chance(
    exp: &Experiment,
    z: &[f64],
    beta: f64,
    out: Option<&Path>,
) -> Result<Vec<CompareRow>, CliError> {
    let params = exp.problem.params();
    if z.len() != params.wells.len() {
        return Err(CliError::Config(format!(
            "design has {} entries for {} wells",
            z.len(),
            params.wells.len()
        )));
    }
    if z.iter().any(|v| !(params.z_min..=params.z_max).contains(v)) {
        return Err(CliError::Config(
            "design lies outside [z_min, z_max]".into(),
        ));
    }
    if !(beta > 0.0) {
        return Err(CliError::Config("beta must be positive".into()));
    }
    let values = exp.constraint_values(z)?;
    let mut rows = Vec::new();
    for m in sample_ladder(exp.samples.len()) {
        for source in ChanceSource::ALL {
            for mode in [ChanceMode::Indicator, ChanceMode::Smoothed(beta)] {
                let e = ChanceEstimate::from_values(values.prefix(source, m), mode, source)?;
                rows.push(CompareRow {
                    samples: m,
                    source: source.label(),
                    mode: mode.label(),
                    beta: mode.beta(),
                    value: e.value,
                    std_error: e.std_error,
                });
            }
        }
    }
    if let Some(dir) = out {
        let d = OutputDir::create(dir)?;
        let mut w = d.csv("chance_compare.csv")?;
        w.write_record([
            "config_hash",
            "seed",
            "samples",
            "source",
            "mode",
            "beta",
            "value",
            "std_error",
        ])?;
        for r in &rows {
            w.write_record([
                exp.hash.clone(),
                exp.seed().to_string(),
                r.samples.to_string(),
                r.source.to_string(),
                r.mode.to_string(),
                r.beta.map(|b| b.to_string()).unwrap_or_default(),
                r.value.to_string(),
                r.std_error.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(rows)
}

/// Reads a design from a JSON array or from a report's `z_opt`.
pub fn read_design(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let arr = v.get("z_opt").unwrap_or(&v);
    serde_json::from_value(arr.clone())
        .map_err(|e| CliError::Config(format!("design in {}: {e}", path.display())))
}
