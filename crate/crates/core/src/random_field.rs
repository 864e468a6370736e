//! Gaussian random field `N(mean, C)` with `C = (-eta_c Laplacian + delta I)^-2`
//! under homogeneous Neumann conditions.
//!
//! Discretely `A = eta_c K + delta M`, white noise is `L xi` with `L L^T` the
//! lumped mass matrix, so samples `mean + A^-1 L xi` have covariance
//! `A^-1 M_L A^-1` and the precision used for all `C^-1` pairings is
//! `A M_L^-1 A`.

use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, invalid, Result};
use crate::fem::{assemble_mass, lumped_mass, stiffness_with_coefficient};
use crate::field::{DualVector, NodalField};
use crate::mesh::StructuredTriMesh;
use crate::solver::{solve_spd, SolverOptions};
use crate::sparse::SparseOperator;

#[derive(Clone, Debug)]
pub struct GaussianFieldModel {
    mean: NodalField,
    eta_c: f64,
    delta: f64,
    operator: SparseOperator,
    lumped: Vec<f64>,
    sqrt_lumped: Vec<f64>,
    solver: SolverOptions,
}

impl GaussianFieldModel {
    pub fn new(
        mesh: &StructuredTriMesh,
        mean: NodalField,
        eta_c: f64,
        delta: f64,
        solver: SolverOptions,
    ) -> Result<Self> {
        if !(eta_c > 0.0) || !(delta > 0.0) {
            return Err(invalid(
                "covariance parameters eta_c and delta must be positive",
            ));
        }
        check_len(mesh.num_vertices(), mean.len())?;
        let nv = mesh.num_vertices();
        let stiffness = stiffness_with_coefficient(mesh, &alloc::vec![1.0; nv]);
        let mass = assemble_mass(mesh);
        let operator = stiffness.scaled(eta_c).add_scaled(delta, &mass);
        let lumped = lumped_mass(&mass);
        let sqrt_lumped = lumped.iter().map(|v| libm::sqrt(*v)).collect();
        Ok(Self {
            mean,
            eta_c,
            delta,
            operator,
            lumped,
            sqrt_lumped,
            solver,
        })
    }

    /// Model with zero mean, typically used to draw the mean field itself.
    pub fn centered(
        mesh: &StructuredTriMesh,
        eta_c: f64,
        delta: f64,
        solver: SolverOptions,
    ) -> Result<Self> {
        Self::new(
            mesh,
            NodalField::zeros(mesh.num_vertices()),
            eta_c,
            delta,
            solver,
        )
    }

    pub fn with_mean(&self, mean: NodalField) -> Result<Self> {
        check_len(self.dim(), mean.len())?;
        Ok(Self {
            mean,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &NodalField {
        &self.mean
    }

    pub fn eta_c(&self) -> f64 {
        self.eta_c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The discretized elliptic operator `eta_c K + delta M`.
    pub fn operator(&self) -> &SparseOperator {
        &self.operator
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_spd(&self.operator, rhs, None, &self.solver).map(|(x, _)| x)
    }

    /// Draws `mean + A^-1 L xi`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NodalField> {
        let noise: Vec<f64> = self
            .sqrt_lumped
            .iter()
            .map(|s| {
                let xi: f64 = rng.sample(StandardNormal);
                s * xi
            })
            .collect();
        let mut m = self.solve(&noise)?;
        for (mi, mean) in m.iter_mut().zip(self.mean.iter()) {
            *mi += mean;
        }
        Ok(NodalField(m))
    }

    /// Discrete `C^-1 field = A M_L^-1 A field`.
    pub fn apply_precision(&self, field: &[f64]) -> DualVector {
        let mut t = self.operator.apply(field);
        for (ti, l) in t.iter_mut().zip(&self.lumped) {
            *ti /= l;
        }
        DualVector(self.operator.apply(&t))
    }

    /// Discrete `C dual = A^-1 M_L A^-1 dual`.
    pub fn apply_cov(&self, dual: &[f64]) -> Result<NodalField> {
        let mut t = self.solve(dual)?;
        for (ti, l) in t.iter_mut().zip(&self.lumped) {
            *ti *= l;
        }
        self.solve(&t).map(NodalField)
    }

    /// `<a, C^-1 b>`.
    pub fn cinv_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::field::dot(a, &self.apply_precision(b))
    }
}

/// An ordered, seed-reproducible set of field samples.
#[derive(Clone, Debug)]
pub struct SampleSet {
    seed: u64,
    samples: Vec<NodalField>,
}

impl SampleSet {
    /// Draws `count` samples from a ChaCha8 stream seeded with `seed`. Each
    /// prefix of the set is the set drawn with a smaller count.
    pub fn generate(model: &GaussianFieldModel, seed: u64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(invalid("sample count must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count)
            .map(|_| model.sample(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { seed, samples })
    }

    pub fn from_samples(seed: u64, samples: Vec<NodalField>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("sample set must be nonempty"));
        }
        Ok(Self { seed, samples })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[NodalField] {
        &self.samples
    }

    /// The first `count` samples.
    pub fn prefix(&self, count: usize) -> Result<SampleSet> {
        if count == 0 || count > self.len() {
            return Err(invalid("prefix length out of range"));
        }
        Ok(Self {
            seed: self.seed,
            samples: self.samples[..count].to_vec(),
        })
    }
}
