//! `sample-field`: the mean field and the first few samples as nodal data.

use std::path::Path;

use crate::error::CliError;
use crate::experiment::Experiment;
use crate::output::OutputDir;

/// Writes `field_samples.csv` in long format; `sample` is `mean` or the
/// sample index. Returns the number of fields written.
pub fn run_sample_field(exp: &Experiment, count: usize, out: &Path) -> Result<usize, CliError> {
    let count = count.min(exp.samples.len());
    let d = OutputDir::create(out)?;
    let mut w = d.csv("field_samples.csv")?;
    w.write_record(["config_hash", "seed", "sample", "node", "x", "y", "value"])?;
    let vertices = exp.problem.mesh().vertices();
    let fields = std::iter::once(("mean".to_string(), exp.field.mean())).chain(
        exp.samples.samples()[..count]
            .iter()
            .enumerate()
            .map(|(i, s)| (i.to_string(), s)),
    );
    for (label, f) in fields {
        for (k, (p, v)) in vertices.iter().zip(f.iter()).enumerate() {
            w.write_record([
                exp.hash.clone(),
                exp.seed().to_string(),
                label.clone(),
                k.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(count + 1)
}
