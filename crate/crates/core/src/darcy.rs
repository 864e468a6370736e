//! Groundwater extraction model: `-div(e^m / mu grad u) = -sum_l z_l h_l` on the
//! unit square with `u = 0` on the boundary.
//!
//! The design objective is `q(z) = (1/L) |z - z_target|^2`, the extraction cost
//! is `P(z) = (eta_p / 2) |z|^2`, and the constraint functional is
//! `f(u) = int_{D_o} u^2 - f_c`. Writing the residual as
//! `r(u, v, m, z) = v^T (A_m u + sum_l z_l b_l)`, `r` is bilinear in `(u, v)`,
//! linear in `z`, and `q`, `P` do not depend on `m`. Consequently only three
//! second-order terms survive in the Hessian of `f` with respect to `m`.
//!
//! Directional stiffness forms `W(a)` use the nodal coefficient `a * e^m / mu`
//! and `W2(a, b)` the coefficient `a * b * e^m / mu`, with the same per-triangle
//! averaging as the stiffness itself.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{check_len, invalid, Error, Result};
use crate::fem::{
    apply_weighted_stiffness, assemble_mass, assemble_subdomain_mass, assemble_weighted_stiffness,
    assemble_well_loads, triangle_values_to_dual,
};
use crate::field::{dot, DualVector, NodalField};
use crate::mesh::{Point, Rect, StructuredTriMesh};
use crate::solver::{solve_spd, SolverOptions};
use crate::sparse::SparseOperator;

/// Physical and design parameters of the extraction problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DarcyParams {
    pub wells: Vec<Point>,
    pub epsilon: f64,
    pub mu: f64,
    pub target: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub eta_p: f64,
    pub region: Rect,
    pub f_c: f64,
    pub alpha: f64,
}

/// `k x k` wells on the interior grid `{1/(k+1), ..., k/(k+1)}^2`, row by row.
pub fn well_grid(k: usize) -> Vec<Point> {
    let s = (k + 1) as f64;
    let mut out = Vec::with_capacity(k * k);
    for j in 1..=k {
        for i in 1..=k {
            out.push(Point::new(i as f64 / s, j as f64 / s));
        }
    }
    out
}

impl Default for DarcyParams {
    /// 25 wells, `eps = 0.1`, `mu = 1`, target 18, bounds `[0, 36]`,
    /// `eta_p = 1e-5`, `D_o = (0.25, 0.75)^2`, `f_c = 2`, `alpha = 0.05`.
    fn default() -> Self {
        Self {
            wells: well_grid(5),
            epsilon: 0.1,
            mu: 1.0,
            target: vec![18.0; 25],
            z_min: 0.0,
            z_max: 36.0,
            eta_p: 1e-5,
            region: Rect::new(0.25, 0.75, 0.25, 0.75),
            f_c: 2.0,
            alpha: 0.05,
        }
    }
}

impl DarcyParams {
    pub fn validate(&self) -> Result<()> {
        if self.wells.is_empty() {
            return Err(invalid("at least one well is required"));
        }
        if self.target.len() != self.wells.len() {
            return Err(invalid(alloc::format!(
                "{} targets given for {} wells",
                self.target.len(),
                self.wells.len()
            )));
        }
        if !(self.z_min < self.z_max) {
            return Err(invalid("z_min must be below z_max"));
        }
        if !(self.mu > 0.0) {
            return Err(invalid("viscosity must be positive"));
        }
        if !(self.f_c > 0.0) {
            return Err(invalid("critical value f_c must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("critical chance alpha must lie in (0, 1)"));
        }
        if !(self.eta_p >= 0.0) {
            return Err(invalid("penalty weight eta_p must be nonnegative"));
        }
        Ok(())
    }
}

/// PDE solve tallies. Increments are atomic so shared read-only use from
/// several threads stays consistent.
#[derive(Debug, Default)]
pub struct SolveCounter {
    state: AtomicUsize,
    linearized: AtomicUsize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveCounts {
    pub state: usize,
    pub linearized: usize,
}

impl SolveCounts {
    pub fn total(&self) -> usize {
        self.state + self.linearized
    }

    /// Component-wise `self - earlier`.
    pub fn since(&self, earlier: SolveCounts) -> SolveCounts {
        SolveCounts {
            state: self.state - earlier.state,
            linearized: self.linearized - earlier.linearized,
        }
    }
}

impl SolveCounter {
    pub fn counts(&self) -> SolveCounts {
        SolveCounts {
            state: self.state.load(Ordering::Relaxed),
            linearized: self.linearized.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.state.store(0, Ordering::Relaxed);
        self.linearized.store(0, Ordering::Relaxed);
    }

    fn add_state(&self) {
        self.state.fetch_add(1, Ordering::Relaxed);
    }

    fn add_linearized(&self) {
        self.linearized.fetch_add(1, Ordering::Relaxed);
    }
}

/// State at a given `(m, z)` together with the constraint adjoint once solved.
#[derive(Clone, Debug)]
pub struct StateBundle {
    pub m: NodalField,
    pub z: Vec<f64>,
    /// Nodal permeability over viscosity, `e^m / mu`.
    pub weight: Vec<f64>,
    pub a_m: SparseOperator,
    pub u: NodalField,
    pub v_f: Option<NodalField>,
}

impl StateBundle {
    pub fn adjoint(&self) -> Result<&NodalField> {
        self.v_f
            .as_ref()
            .ok_or(Error::MissingState("constraint adjoint"))
    }
}

/// Result of a Hessian action with the incremental fields that produced it.
#[derive(Clone, Debug)]
pub struct HessianAction {
    pub value: DualVector,
    pub u_hat: NodalField,
    pub v_hat: NodalField,
}

pub struct DarcyProblem {
    mesh: StructuredTriMesh,
    params: DarcyParams,
    mass: SparseOperator,
    region_mass: SparseOperator,
    loads: Vec<DualVector>,
    solver: SolverOptions,
    counter: SolveCounter,
}

impl DarcyProblem {
    pub fn new(
        mesh: StructuredTriMesh,
        params: DarcyParams,
        solver: SolverOptions,
    ) -> Result<Self> {
        params.validate()?;
        let mass = assemble_mass(&mesh);
        let region_mass = assemble_subdomain_mass(&mesh, &params.region)?;
        let loads = assemble_well_loads(&mesh, &mass, &params.wells, params.epsilon)?;
        Ok(Self {
            mesh,
            params,
            mass,
            region_mass,
            loads,
            solver,
            counter: SolveCounter::default(),
        })
    }

    pub fn mesh(&self) -> &StructuredTriMesh {
        &self.mesh
    }

    pub fn params(&self) -> &DarcyParams {
        &self.params
    }

    pub fn num_wells(&self) -> usize {
        self.loads.len()
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn region_mass(&self) -> &SparseOperator {
        &self.region_mass
    }

    pub fn loads(&self) -> &[DualVector] {
        &self.loads
    }

    pub fn counter(&self) -> &SolveCounter {
        &self.counter
    }

    pub fn solver_options(&self) -> &SolverOptions {
        &self.solver
    }

    /// Projects `z` onto the box `[z_min, z_max]^L`.
    pub fn project(&self, z: &mut [f64]) {
        for zi in z {
            *zi = zi.clamp(self.params.z_min, self.params.z_max);
        }
    }

    /// Right-hand side `-sum_l z_l b_l`.
    pub fn source(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.num_wells(), z.len())?;
        let mut rhs = vec![0.0; self.mesh.num_vertices()];
        for (b, zl) in self.loads.iter().zip(z) {
            for (r, bi) in rhs.iter_mut().zip(b.iter()) {
                *r -= zl * bi;
            }
        }
        Ok(rhs)
    }

    /// `(<b_l, v>)_l`, the sensitivity of `r` to `z_l`.
    pub fn load_pairing(&self, v: &[f64]) -> Vec<f64> {
        self.loads.iter().map(|b| dot(b, v)).collect()
    }

    /// Solves the state equation. Designs outside the bounds are accepted.
    pub fn solve_state(&self, m: &NodalField, z: &[f64]) -> Result<StateBundle> {
        check_len(self.mesh.num_vertices(), m.len())?;
        if !m.is_finite() {
            return Err(invalid("parameter field has non-finite entries"));
        }
        let weight: Vec<f64> = m.iter().map(|v| libm::exp(*v) / self.params.mu).collect();
        let a_m = assemble_weighted_stiffness(&self.mesh, &NodalField(weight.clone()))?;
        let rhs = self.source(z)?;
        self.counter.add_state();
        let (u, _) = solve_spd(&a_m, &rhs, Some(self.mesh.boundary_mask()), &self.solver)?;
        Ok(StateBundle {
            m: m.clone(),
            z: z.to_vec(),
            weight,
            a_m,
            u: NodalField(u),
            v_f: None,
        })
    }

    /// Solves `A_m x = rhs` with homogeneous Dirichlet data, counted as one
    /// linearized solve. Used for adjoints, incremental fields and multipliers.
    pub fn solve_linearized(&self, bundle: &StateBundle, rhs: &[f64]) -> Result<NodalField> {
        self.counter.add_linearized();
        let (x, _) = solve_spd(
            &bundle.a_m,
            rhs,
            Some(self.mesh.boundary_mask()),
            &self.solver,
        )?;
        Ok(NodalField(x))
    }

    pub fn eval_q(&self, z: &[f64]) -> f64 {
        let l = z.len() as f64;
        z.iter()
            .zip(&self.params.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / l
    }

    pub fn grad_q(&self, z: &[f64]) -> Vec<f64> {
        let l = z.len() as f64;
        z.iter()
            .zip(&self.params.target)
            .map(|(a, b)| 2.0 * (a - b) / l)
            .collect()
    }

    pub fn eval_penalty(&self, z: &[f64]) -> f64 {
        0.5 * self.params.eta_p * dot(z, z)
    }

    pub fn grad_penalty(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| self.params.eta_p * v).collect()
    }

    /// `f(u) = u^T M_o u - f_c`.
    pub fn eval_f(&self, u: &[f64]) -> f64 {
        self.region_mass.quadratic_form(u) - self.params.f_c
    }

    /// Solves `A_m v = -2 M_o u`.
    pub fn solve_adjoint_f(&self, bundle: &StateBundle) -> Result<NodalField> {
        let rhs: Vec<f64> = self
            .region_mass
            .apply(&bundle.u)
            .iter()
            .map(|v| -2.0 * v)
            .collect();
        self.solve_linearized(bundle, &rhs)
    }

    /// Solves the adjoint and stores it in the bundle.
    pub fn attach_adjoint(&self, bundle: &mut StateBundle) -> Result<()> {
        let v = self.solve_adjoint_f(bundle)?;
        bundle.v_f = Some(v);
        Ok(())
    }

    /// `W(dir) x`.
    pub fn apply_w(&self, bundle: &StateBundle, dir: &[f64], x: &[f64]) -> Vec<f64> {
        let coef: Vec<f64> = dir.iter().zip(&bundle.weight).map(|(a, w)| a * w).collect();
        apply_weighted_stiffness(&self.mesh, &coef, x)
    }

    /// `W2(a, b) x`.
    pub fn apply_w2(&self, bundle: &StateBundle, a: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let coef: Vec<f64> = a
            .iter()
            .zip(b)
            .zip(&bundle.weight)
            .map(|((a, b), w)| a * b * w)
            .collect();
        apply_weighted_stiffness(&self.mesh, &coef, x)
    }

    /// Dual `d` with `<mt, d> = q^T W(mt * scale) p` for all nodal `mt`; with
    /// `scale = None` this is `q^T W(mt) p`.
    pub fn pairing_dual(
        &self,
        bundle: &StateBundle,
        scale: Option<&[f64]>,
        p: &[f64],
        q: &[f64],
    ) -> DualVector {
        let per_tri = self.mesh.gradient_products(p, q);
        match scale {
            None => triangle_values_to_dual(&self.mesh, &per_tri, &bundle.weight),
            Some(s) => {
                let coef: Vec<f64> = s.iter().zip(&bundle.weight).map(|(a, w)| a * w).collect();
                triangle_values_to_dual(&self.mesh, &per_tri, &coef)
            }
        }
    }

    /// Gradient of `f` with respect to `m`: `<mt, g> = v^T W(mt) u`.
    pub fn grad_m_f(&self, bundle: &StateBundle) -> Result<DualVector> {
        let v = bundle.adjoint()?;
        Ok(self.pairing_dual(bundle, None, &bundle.u, v))
    }

    /// Incremental state and adjoint in direction `m_hat` (two linearized
    /// solves) without forming the Hessian action.
    pub fn incremental_fields(
        &self,
        bundle: &StateBundle,
        m_hat: &[f64],
    ) -> Result<(NodalField, NodalField)> {
        check_len(self.mesh.num_vertices(), m_hat.len())?;
        let v = bundle.adjoint()?;
        let rhs: Vec<f64> = self
            .apply_w(bundle, m_hat, &bundle.u)
            .iter()
            .map(|x| -x)
            .collect();
        let u_hat = self.solve_linearized(bundle, &rhs)?;
        let mo_u = self.region_mass.apply(&u_hat);
        let wv = self.apply_w(bundle, m_hat, v);
        let rhs: Vec<f64> = mo_u.iter().zip(&wv).map(|(a, b)| -2.0 * a - b).collect();
        let v_hat = self.solve_linearized(bundle, &rhs)?;
        Ok((u_hat, v_hat))
    }

    /// Assembles the Hessian action from precomputed incremental fields.
    pub fn hessian_from_increments(
        &self,
        bundle: &StateBundle,
        m_hat: &[f64],
        u_hat: &[f64],
        v_hat: &[f64],
    ) -> Result<DualVector> {
        let v = bundle.adjoint()?;
        let mut h = self.pairing_dual(bundle, None, &bundle.u, v_hat);
        h.axpy(1.0, &self.pairing_dual(bundle, None, u_hat, v));
        h.axpy(1.0, &self.pairing_dual(bundle, Some(m_hat), &bundle.u, v));
        Ok(h)
    }

    /// Hessian action of `f` with respect to `m` together with the incremental
    /// state and adjoint.
    pub fn hess_action_full(&self, bundle: &StateBundle, m_hat: &[f64]) -> Result<HessianAction> {
        let (u_hat, v_hat) = self.incremental_fields(bundle, m_hat)?;
        let value = self.hessian_from_increments(bundle, m_hat, &u_hat, &v_hat)?;
        Ok(HessianAction {
            value,
            u_hat,
            v_hat,
        })
    }

    pub fn hess_action_f(&self, bundle: &StateBundle, m_hat: &[f64]) -> Result<DualVector> {
        self.hess_action_full(bundle, m_hat).map(|h| h.value)
    }

    /// Per-triangle Darcy velocity `-(e^m / mu) grad u`.
    pub fn velocity(&self, bundle: &StateBundle) -> Vec<[f64; 2]> {
        self.mesh
            .triangles()
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let k =
                    (bundle.weight[tri[0]] + bundle.weight[tri[1]] + bundle.weight[tri[2]]) / 3.0;
                let g = self.mesh.field_gradient(t, &bundle.u);
                [-k * g[0], -k * g[1]]
            })
            .collect()
    }
}
