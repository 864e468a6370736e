//! Assembled experiment and the per-design chance diagnostics shared by the
//! verbs.

use chanceopt_core::{
    build_surrogate, saa_bias, ChanceEstimate, ChanceMode, ChanceSource, CostGradEngine,
    DarcyProblem, GaussianFieldModel, NodalField, SampleSet, SolverOptions, StructuredTriMesh,
    SurrogateBuild,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub problem: DarcyProblem,
    /// Second copy of the model for diagnostics, so that their solves do not
    /// enter the optimizer's counters.
    pub diagnostics: DarcyProblem,
    pub field: GaussianFieldModel,
    pub samples: SampleSet,
}

fn config_error(e: chanceopt_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Prior draw with seed `mean_seed` on the mean mesh, interpolated onto `mesh`.
pub fn mean_field(
    config: &ExperimentConfig,
    mesh: &StructuredTriMesh,
) -> Result<NodalField, CliError> {
    let f = &config.field;
    let solver = SolverOptions::default();
    let base = StructuredTriMesh::unit_square(f.mean_mesh).map_err(config_error)?;
    let prior =
        GaussianFieldModel::centered(&base, f.eta_c, f.delta, solver).map_err(config_error)?;
    let draw = prior.sample(&mut ChaCha8Rng::seed_from_u64(f.mean_seed))?;
    Ok(NodalField(mesh.transfer_from(&base, &draw)?))
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let solver = SolverOptions::default();
        let mesh = StructuredTriMesh::unit_square(config.mesh.n).map_err(config_error)?;
        let params = config.darcy_params();
        let problem =
            DarcyProblem::new(mesh.clone(), params.clone(), solver).map_err(config_error)?;
        let diagnostics = DarcyProblem::new(mesh.clone(), params, solver).map_err(config_error)?;
        let mean = mean_field(&config, &mesh)?;
        let field =
            GaussianFieldModel::new(&mesh, mean, config.field.eta_c, config.field.delta, solver)
                .map_err(config_error)?;
        let samples =
            SampleSet::generate(&field, config.derived_seeds().0, config.sampling.samples)?;
        Ok(Self {
            hash: config.hash(),
            config,
            problem,
            diagnostics,
            field,
            samples,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn engine(&self) -> Result<CostGradEngine<'_>, CliError> {
        let engine = CostGradEngine::new(
            self.config.run.engine.into(),
            &self.problem,
            &self.field,
            &self.samples,
            self.config.low_rank(),
            self.config.initial_smoothing(),
        )?;
        Ok(engine.with_gradient(self.config.surrogate.gradient.into()))
    }

    /// Constraint values at `z` for every sample, through the full model and
    /// the three Taylor surrogates. Full-model solves run in parallel.
    pub fn constraint_values(&self, z: &[f64]) -> Result<ConstraintValues, CliError> {
        let p = &self.diagnostics;
        let full = self
            .samples
            .samples()
            .par_iter()
            .map(|m| p.solve_state(m, z).map(|s| p.eval_f(&s.u)))
            .collect::<Result<Vec<f64>, _>>()?;
        let build = build_surrogate(p, &self.field, z, &self.config.low_rank())?;
        let mut taylor = [Vec::new(), Vec::new(), Vec::new()];
        for m in self.samples.samples() {
            let t = build.surrogate.eval_all(m);
            for k in 0..3 {
                taylor[k].push(t[k]);
            }
        }
        Ok(ConstraintValues {
            full,
            taylor,
            build,
        })
    }
}

pub struct ConstraintValues {
    pub full: Vec<f64>,
    pub taylor: [Vec<f64>; 3],
    pub build: SurrogateBuild,
}

impl ConstraintValues {
    pub fn values(&self, source: ChanceSource) -> &[f64] {
        match source.order() {
            None => &self.full,
            Some(k) => &self.taylor[k],
        }
    }

    /// Truncated to the first `count` samples.
    pub fn prefix(&self, source: ChanceSource, count: usize) -> &[f64] {
        &self.values(source)[..count]
    }

    pub fn estimate(
        &self,
        source: ChanceSource,
        mode: ChanceMode,
    ) -> Result<ChanceEstimate, CliError> {
        Ok(ChanceEstimate::from_values(
            self.values(source),
            mode,
            source,
        )?)
    }

    /// Median of `|f - T_k f|` over the samples.
    pub fn median_error(&self, order: usize) -> f64 {
        let mut e: Vec<f64> = self
            .full
            .iter()
            .zip(&self.taylor[order])
            .map(|(f, t)| (f - t).abs())
            .collect();
        median(&mut e)
    }

    /// `sqrt(MSE / M)` of the smoothed full-model values.
    pub fn saa_bias(&self, beta: f64) -> Result<f64, CliError> {
        let mode = ChanceMode::Smoothed(beta);
        let mapped: Vec<f64> = self.full.iter().map(|f| mode.apply(*f)).collect();
        Ok(saa_bias(&mapped)?)
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A chance estimate as written to reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub source: &'static str,
    pub mode: &'static str,
    pub beta: Option<f64>,
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl EstimateRecord {
    pub fn new(e: &ChanceEstimate, seed: u64) -> Self {
        Self {
            source: e.source.label(),
            mode: e.mode.label(),
            beta: e.mode.beta(),
            value: e.value,
            std_error: e.std_error,
            samples: e.sample_count,
            seed,
        }
    }
}

/// Estimates from every source in both modes.
pub fn all_estimates(
    values: &ConstraintValues,
    beta: f64,
    seed: u64,
) -> Result<Vec<EstimateRecord>, CliError> {
    let mut out = Vec::new();
    for source in ChanceSource::ALL {
        for mode in [ChanceMode::Smoothed(beta), ChanceMode::Indicator] {
            out.push(EstimateRecord::new(&values.estimate(source, mode)?, seed));
        }
    }
    Ok(out)
}
