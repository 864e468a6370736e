//! Experiment configuration. Files are TOML; every key has a default and an
//! empty file reproduces the reference experiment.

use std::path::{Path, PathBuf};

use chanceopt_core::darcy::well_grid;
use chanceopt_core::optimizer::GrowthRule;
use chanceopt_core::{
    ContinuationSchedule, DarcyParams, EngineKind, LowRankOptions, Point, Rect, SmoothingParams,
    TaylorGradient,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Samples and eigensolver sketches are drawn from streams
    /// derived from it.
    pub seed: u64,
    pub mesh: MeshConfig,
    pub field: FieldConfig,
    pub model: ModelConfig,
    pub sampling: SamplingConfig,
    pub surrogate: SurrogateConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 21,
            mesh: MeshConfig::default(),
            field: FieldConfig::default(),
            model: ModelConfig::default(),
            sampling: SamplingConfig::default(),
            surrogate: SurrogateConfig::default(),
            schedule: ScheduleConfig::default(),
            run: RunConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Cells per side; must be divisible by 4 so the observation region is
    /// aligned with the mesh.
    pub n: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub eta_c: f64,
    pub delta: f64,
    /// Seed of the single prior draw used as the mean field.
    pub mean_seed: u64,
    /// Mesh on which the mean is drawn before interpolation onto the
    /// experiment mesh, so that runs on different meshes share one mean.
    pub mean_mesh: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            eta_c: 0.1,
            delta: 10.0,
            mean_seed: 2,
            mean_mesh: 32,
        }
    }
}

/// A value per well, or one value for all wells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerWell {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerWell {
    pub fn expand(&self, wells: usize) -> Vec<f64> {
        match self {
            PerWell::Uniform(v) => vec![*v; wells],
            PerWell::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mu: f64,
    pub epsilon: f64,
    pub f_c: f64,
    pub alpha: f64,
    pub eta_p: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub target: PerWell,
    /// Wells on a `k x k` interior grid, unless `wells` lists them.
    pub wells_per_side: usize,
    pub wells: Option<Vec<[f64; 2]>>,
    /// Observation region `[x0, x1, y0, y1]`.
    pub region: [f64; 4],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mu: 2.56,
            epsilon: 0.1,
            f_c: 2.0,
            alpha: 0.05,
            eta_p: 1e-5,
            z_min: 0.0,
            z_max: 36.0,
            target: PerWell::Uniform(18.0),
            wells_per_side: 5,
            wells: None,
            region: [0.25, 0.75, 0.25, 0.75],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub samples: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { samples: 1024 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Exact,
    Frozen,
}

impl From<GradientMode> for TaylorGradient {
    fn from(g: GradientMode) -> Self {
        match g {
            GradientMode::Exact => TaylorGradient::Exact,
            GradientMode::Frozen => TaylorGradient::Frozen,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub rank: usize,
    pub oversampling: usize,
    pub gradient: GradientMode,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            oversampling: 10,
            gradient: GradientMode::Exact,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Geometric,
    Compounding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub beta_0: f64,
    pub gamma_0: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
    pub growth: Growth,
    pub l_max: usize,
    pub eps_out: f64,
    pub k_max: usize,
    pub eps_in: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = ContinuationSchedule::default();
        Self {
            beta_0: s.beta_0,
            gamma_0: s.gamma_0,
            sigma_beta: s.sigma_beta,
            sigma_gamma: s.sigma_gamma,
            growth: Growth::Geometric,
            l_max: s.l_max,
            eps_out: s.eps_out,
            k_max: s.k_max,
            eps_in: s.eps_in,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Saa,
    Taylor2,
}

impl From<Engine> for EngineKind {
    fn from(e: Engine) -> Self {
        match e {
            Engine::Saa => EngineKind::Saa,
            Engine::Taylor2 => EngineKind::Taylor2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    pub z0: PerWell,
    /// Not echoed in reports or hashed, so moving the output directory does
    /// not change the results.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Taylor2,
            z0: PerWell::Uniform(18.0),
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides applied on top of a loaded file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub engine: Option<Engine>,
    pub mesh: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(e) = o.engine {
            self.run.engine = e;
        }
        if let Some(n) = o.mesh {
            self.mesh.n = n;
        }
        self.validate()
    }

    pub fn num_wells(&self) -> usize {
        match &self.model.wells {
            Some(w) => w.len(),
            None => self.model.wells_per_side * self.model.wells_per_side,
        }
    }

    pub fn darcy_params(&self) -> DarcyParams {
        let m = &self.model;
        let wells = match &m.wells {
            Some(w) => w.iter().map(|p| Point::new(p[0], p[1])).collect(),
            None => well_grid(m.wells_per_side),
        };
        DarcyParams {
            target: m.target.expand(wells.len()),
            wells,
            epsilon: m.epsilon,
            mu: m.mu,
            z_min: m.z_min,
            z_max: m.z_max,
            eta_p: m.eta_p,
            region: Rect::new(m.region[0], m.region[1], m.region[2], m.region[3]),
            f_c: m.f_c,
            alpha: m.alpha,
        }
    }

    pub fn schedule(&self) -> ContinuationSchedule {
        let s = &self.schedule;
        ContinuationSchedule {
            beta_0: s.beta_0,
            gamma_0: s.gamma_0,
            sigma_beta: s.sigma_beta,
            sigma_gamma: s.sigma_gamma,
            growth: match s.growth {
                Growth::Geometric => GrowthRule::Geometric,
                Growth::Compounding => GrowthRule::Compounding,
            },
            l_max: s.l_max,
            eps_out: s.eps_out,
            k_max: s.k_max,
            eps_in: s.eps_in,
        }
    }

    /// Smoothing of the first continuation step.
    pub fn initial_smoothing(&self) -> SmoothingParams {
        self.schedule().step(1)
    }

    pub fn z0(&self) -> Vec<f64> {
        self.run.z0.expand(self.num_wells())
    }

    /// Seeds of the sample set and of the eigensolver sketch, in that order.
    pub fn derived_seeds(&self) -> (u64, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (rng.next_u64(), rng.next_u64())
    }

    pub fn low_rank(&self) -> LowRankOptions {
        LowRankOptions {
            rank: self.surrogate.rank,
            oversampling: self.surrogate.oversampling,
            seed: self.derived_seeds().1,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Checks every numeric constraint before anything is assembled.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let n = self.mesh.n;
        if n < 4 || !n.is_multiple_of(4) {
            return bad(format!("mesh.n = {n} must be a positive multiple of 4"));
        }
        if self.field.mean_mesh < 4 || !self.field.mean_mesh.is_multiple_of(4) {
            return bad(format!(
                "field.mean_mesh = {} must be a positive multiple of 4",
                self.field.mean_mesh
            ));
        }
        if !(self.field.eta_c > 0.0 && self.field.delta > 0.0) {
            return bad("field.eta_c and field.delta must be positive".into());
        }
        if !(self.model.epsilon > 0.0) {
            return bad("model.epsilon must be positive".into());
        }
        if self.model.wells.is_none() && self.model.wells_per_side == 0 {
            return bad("model.wells_per_side must be at least 1".into());
        }
        if let PerWell::List(v) = &self.model.target {
            if v.len() != self.num_wells() {
                return bad(format!(
                    "model.target has {} entries for {} wells",
                    v.len(),
                    self.num_wells()
                ));
            }
        }
        self.darcy_params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let r = &self.model.region;
        let aligned = |v: f64| {
            let s = v * n as f64;
            (s - s.round()).abs() <= 1e-9
        };
        if !(r[0] < r[1] && r[2] < r[3])
            || r.iter().any(|v| !(0.0..=1.0).contains(v) || !aligned(*v))
        {
            return bad(format!(
                "model.region {r:?} must be an ordered box aligned with the mesh"
            ));
        }
        if self.sampling.samples < 2 {
            return bad("sampling.samples must be at least 2".into());
        }
        let s = &self.surrogate;
        if s.rank == 0 || s.oversampling > 10 {
            return bad(
                "surrogate.rank must be at least 1 and surrogate.oversampling at most 10".into(),
            );
        }
        if s.rank + s.oversampling > (n + 1) * (n + 1) {
            return bad(
                "surrogate.rank + surrogate.oversampling exceeds the parameter dimension".into(),
            );
        }
        self.schedule()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let PerWell::List(v) = &self.run.z0 {
            if v.len() != self.num_wells() {
                return bad(format!(
                    "run.z0 has {} entries for {} wells",
                    v.len(),
                    self.num_wells()
                ));
            }
        }
        if self
            .z0()
            .iter()
            .any(|v| !(self.model.z_min..=self.model.z_max).contains(v))
        {
            return bad("run.z0 lies outside [z_min, z_max]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_configuration() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.num_wells(), 25);
        assert_eq!(c.schedule().step(4).gamma, 1e6);
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.run.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
