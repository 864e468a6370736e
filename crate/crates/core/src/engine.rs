//! Cost and gradient of the smoothed, penalized objective
//! `E(z) = q(z) + P(z) + S_gamma(mean_i logistic_beta(f_i(z)) - alpha)`
//! with `f_i` either the full model at sample `m_i` (SAA engine) or the
//! low-rank quadratic surrogate built at `(m_bar, z)` (Taylor engine).
//!
//! For the Taylor engine every term of the chance is a function of the state
//! `u`, the adjoint `v` and incremental fields at `(m_bar, z)`, all linear in
//! `z`. The gradient is collected as two source vectors, the partial
//! derivatives in `v` and `u`, which are then pulled back to `z` with two
//! linearized solves:
//!
//! ```text
//! A p_v = -src_v,   A p_u = -(src_u + 2 M_o p_v),   dE/dz_l = q' + P' + <b_l, p_u>.
//! ```
//!
//! A Hessian form `h(a, b) = a^T H b` contributes
//! `W(a) u_b + W(b) u_a + W2(a, b) u` to `src_v` and
//! `W(a) v_b + W(b) v_a + W2(a, b) v` to `src_u`, where `u_a, v_a` are the
//! incremental state and adjoint in direction `a`.

use alloc::vec;
use alloc::vec::Vec;

use crate::chance::{logistic, logistic_grad, penalty, penalty_grad, SmoothingParams};
use crate::darcy::{DarcyProblem, SolveCounts, StateBundle};
use crate::dense::{matmul, solve_upper, transpose, zeros, Matrix};
use crate::error::{check_len, invalid, Result};
use crate::field::{dot, NodalField};
use crate::random_field::{GaussianFieldModel, SampleSet};
use crate::taylor::{build_surrogate, Increments, LowRankOptions, SurrogateBuild};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    Saa,
    Taylor2,
}

/// How the Taylor engine differentiates the low-rank quadratic term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaylorGradient {
    /// Eigenvalue sensitivities only, with `(psi_n)^* = c_n psi_n`:
    /// `2 rank + 2` extra linearized solves, all increments at `psi_n`
    /// recovered from the eigensolver's second pass.
    Frozen,
    /// Derivative of the eigensolver output itself: Rayleigh-Ritz rotation
    /// terms between kept and discarded directions and the sensitivity of the
    /// sketched basis. Costs `2 (rank + oversampling)` more solves.
    Exact,
}

/// One cost and gradient evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cost: f64,
    pub grad: Vec<f64>,
    /// Smoothed chance `mean_i logistic_beta(f_i)` entering the penalty.
    pub chance: f64,
    /// PDE solves spent on this evaluation.
    pub solves: SolveCounts,
}

pub struct CostGradEngine<'a> {
    kind: EngineKind,
    problem: &'a DarcyProblem,
    field: &'a GaussianFieldModel,
    samples: &'a SampleSet,
    low_rank: LowRankOptions,
    gradient: TaylorGradient,
    smoothing: SmoothingParams,
    cache: Option<SurrogateBuild>,
}

impl<'a> CostGradEngine<'a> {
    pub fn new(
        kind: EngineKind,
        problem: &'a DarcyProblem,
        field: &'a GaussianFieldModel,
        samples: &'a SampleSet,
        low_rank: LowRankOptions,
        smoothing: SmoothingParams,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("engine needs a nonempty sample set"));
        }
        check_len(problem.mesh().num_vertices(), field.dim())?;
        check_len(field.dim(), samples.samples()[0].len())?;
        Ok(Self {
            kind,
            problem,
            field,
            samples,
            low_rank,
            gradient: TaylorGradient::Exact,
            smoothing,
            cache: None,
        })
    }

    pub fn with_gradient(mut self, gradient: TaylorGradient) -> Self {
        self.gradient = gradient;
        self
    }

    pub fn kind(&self) -> EngineKind {
        self.kind
    }

    pub fn problem(&self) -> &'a DarcyProblem {
        self.problem
    }

    pub fn field(&self) -> &'a GaussianFieldModel {
        self.field
    }

    pub fn samples(&self) -> &'a SampleSet {
        self.samples
    }

    pub fn low_rank(&self) -> LowRankOptions {
        self.low_rank
    }

    pub fn gradient_mode(&self) -> TaylorGradient {
        self.gradient
    }

    pub fn smoothing(&self) -> SmoothingParams {
        self.smoothing
    }

    pub fn set_smoothing(&mut self, smoothing: SmoothingParams) {
        self.smoothing = smoothing;
    }

    /// Surrogate built by the most recent Taylor evaluation.
    pub fn last_surrogate(&self) -> Option<&SurrogateBuild> {
        self.cache.as_ref()
    }

    /// Cost and gradient at `z`.
    pub fn evaluate(&mut self, z: &[f64]) -> Result<Evaluation> {
        check_len(self.problem.num_wells(), z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("design has non-finite entries"));
        }
        let before = self.problem.counter().counts();
        let (chance, mut grad) = match self.kind {
            EngineKind::Saa => self.saa(z)?,
            EngineKind::Taylor2 => self.taylor(z)?,
        };
        let p = self.problem;
        let alpha = p.params().alpha;
        let cost = p.eval_q(z) + p.eval_penalty(z) + penalty(chance - alpha, self.smoothing.gamma);
        for ((g, a), b) in grad.iter_mut().zip(p.grad_q(z)).zip(p.grad_penalty(z)) {
            *g += a + b;
        }
        if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(invalid("objective evaluation produced non-finite values"));
        }
        Ok(Evaluation {
            cost,
            grad,
            chance,
            solves: p.counter().counts().since(before),
        })
    }

    fn penalty_slope(&self, chance: f64) -> f64 {
        penalty_grad(chance - self.problem.params().alpha, self.smoothing.gamma)
    }

    /// Smoothed chance and the chance part of the gradient.
    fn saa(&mut self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let beta = self.smoothing.beta;
        let mut states = Vec::with_capacity(self.samples.len());
        let mut sum = 0.0;
        for m in self.samples.samples() {
            let s = p.solve_state(m, z)?;
            let f = p.eval_f(&s.u);
            sum += logistic(f, beta);
            states.push((s, f));
        }
        let count = self.samples.len() as f64;
        let chance = sum / count;
        let slope = self.penalty_slope(chance);
        let mut grad = vec![0.0; z.len()];
        if slope == 0.0 {
            return Ok((chance, grad));
        }
        for (s, f) in &states {
            let w = slope * logistic_grad(*f, beta) / count;
            if w == 0.0 {
                continue;
            }
            let v = p.solve_adjoint_f(s)?;
            for (g, b) in grad.iter_mut().zip(p.load_pairing(&v)) {
                *g += w * b;
            }
        }
        Ok((chance, grad))
    }

    fn taylor(&mut self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let beta = self.smoothing.beta;
        self.cache = None;
        let build = build_surrogate(p, self.field, z, &self.low_rank)?;
        let s = &build.surrogate;
        let mean = self.field.mean();
        let diffs: Vec<Vec<f64>> = self
            .samples
            .samples()
            .iter()
            .map(|m| m.iter().zip(mean.iter()).map(|(a, b)| a - b).collect())
            .collect();
        let mut values = Vec::with_capacity(diffs.len());
        let mut sum = 0.0;
        for d in &diffs {
            let t2 = s.f_bar
                + dot(d, &s.grad)
                + 0.5
                    * s.pairs
                        .lambdas
                        .iter()
                        .zip(&s.pairs.cinv_psis)
                        .map(|(l, c)| l * sq(dot(d, c)))
                        .sum::<f64>();
            sum += logistic(t2, beta);
            values.push(t2);
        }
        let count = diffs.len() as f64;
        let chance = sum / count;
        let slope = self.penalty_slope(chance);
        let mut grad = vec![0.0; z.len()];
        if slope != 0.0 {
            let weights: Vec<f64> = values
                .iter()
                .map(|t| slope * logistic_grad(*t, beta) / count)
                .collect();
            grad = match self.gradient {
                TaylorGradient::Frozen => self.frozen_gradient(&build, &diffs, &weights)?,
                TaylorGradient::Exact => self.exact_gradient(&build, &diffs, &weights)?,
            };
        }
        self.cache = Some(build);
        Ok((chance, grad))
    }

    /// Frozen-eigenvector multipliers `d^f`, `m^f` and `c_n`, with increments at the
    /// eigenvectors recovered from the eigensolver's second pass.
    fn frozen_gradient(
        &self,
        build: &SurrogateBuild,
        diffs: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<Vec<f64>> {
        let s = &build.surrogate;
        let n = s.pairs.len();
        let mut forms = HessianForms::new(self.problem, &build.state, self.field.dim());
        let mut c = vec![0.0; n];
        for (d, w) in diffs.iter().zip(weights) {
            for (cn, cpsi) in c.iter_mut().zip(&s.pairs.cinv_psis) {
                *cn += 0.5 * w * sq(dot(d, cpsi));
            }
        }
        let incs = build.eigen_increments();
        for ((cn, psi), inc) in c.iter().zip(&s.pairs.psis).zip(&incs) {
            forms.add(*cn, psi, inc, psi, inc);
        }
        self.finish(build, diffs, weights, forms)
    }

    /// Differentiates the full eigensolver map `z -> (Q, T)` with the sketch
    /// `Omega` held fixed.
    fn exact_gradient(
        &self,
        build: &SurrogateBuild,
        diffs: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<Vec<f64>> {
        let p = self.problem;
        let dp = &build.decomposition;
        let qr = &dp.qr;
        let rank = qr.q.len();
        let kept = dp.pairs.len();
        let dim = self.field.dim();
        let mut forms = HessianForms::new(p, &build.state, dim);
        if rank == 0 {
            return self.finish(build, diffs, weights, forms);
        }
        if !qr.dropped.is_empty() {
            return Err(invalid("exact Taylor gradient needs a full-rank sketch"));
        }
        // Z = Q^T E Q with E = sum_i w_i e_i e_i^T, e_i = C^-1 d_i.
        let coords: Vec<Vec<f64>> = diffs
            .iter()
            .map(|d| qr.cinv_q.iter().map(|c| dot(d, c)).collect())
            .collect();
        let mut zq = zeros(rank, rank);
        for (a, w) in coords.iter().zip(weights) {
            for i in 0..rank {
                for j in 0..rank {
                    zq[i][j] += w * a[i] * a[j];
                }
            }
        }
        let sv = &dp.ritz.vectors;
        let lam = &dp.ritz.values;
        let zt = matmul(&matmul(&transpose(sv), &zq), sv);
        let mut bt = zeros(rank, rank);
        for a in 0..rank {
            for b in 0..rank {
                let g = match (a < kept, b < kept) {
                    (true, true) => 1.0,
                    (true, false) => ratio(lam[a], lam[b]),
                    (false, true) => ratio(lam[b], lam[a]),
                    (false, false) => 0.0,
                };
                bt[a][b] = 0.5 * g * zt[a][b];
            }
        }
        let bq = matmul(&matmul(sv, &bt), &transpose(sv));
        let mut pq = zeros(rank, rank);
        for n in 0..kept {
            for i in 0..rank {
                for j in 0..rank {
                    pq[i][j] += lam[n] * sv[i][n] * sv[j][n];
                }
            }
        }
        for j in 0..rank {
            for l in 0..rank {
                let qj = &qr.q[j];
                let ql = &qr.q[l];
                forms.add(
                    bq[j][l],
                    qj,
                    &build.q_increments[j],
                    ql,
                    &build.q_increments[l],
                );
            }
        }
        // G_Q = E Q P + 2 (H Q) B, as dual columns; E Q P = C^-1 sum_i w_i d_i (a_i P).
        let mut g_cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
        for col in 0..rank {
            let mut acc = vec![0.0; dim];
            for ((a, w), d) in coords.iter().zip(weights).zip(diffs) {
                let c = w * (0..rank).map(|j| a[j] * pq[j][col]).sum::<f64>();
                if c != 0.0 {
                    for (x, di) in acc.iter_mut().zip(d) {
                        *x += c * di;
                    }
                }
            }
            let mut gcol = self.field.apply_precision(&acc).into_inner();
            for j in 0..rank {
                let b = 2.0 * bq[j][col];
                if b != 0.0 {
                    for (g, h) in gcol.iter_mut().zip(dp.h_q[j].iter()) {
                        *g += b * h;
                    }
                }
            }
            g_cols.push(gcol);
        }
        // Ybar = (I - C^-1 Q Q^T) G_Q R^-T.
        let mut ybar: Vec<Vec<f64>> = vec![vec![0.0; dim]; rank];
        let mut row = vec![0.0; rank];
        for i in 0..dim {
            for (r, g) in row.iter_mut().zip(&g_cols) {
                *r = g[i];
            }
            let x = solve_upper(&row_major_r(&qr.r, rank), &row);
            for (y, xv) in ybar.iter_mut().zip(&x) {
                y[i] = *xv;
            }
        }
        for y in ybar.iter_mut() {
            let proj: Vec<f64> = qr.q.iter().map(|q| dot(q, y)).collect();
            for (pj, c) in proj.iter().zip(&qr.cinv_q) {
                for (yi, ci) in y.iter_mut().zip(c.iter()) {
                    *yi -= pj * ci;
                }
            }
        }
        for (j, y) in ybar.iter().enumerate() {
            let rho = self.field.apply_cov(y)?;
            let (u_hat, v_hat) = p.incremental_fields(&build.state, &rho)?;
            let rho_inc = Increments { u_hat, v_hat };
            let omega = NodalField(dp.omega[j].clone());
            forms.add(1.0, &rho, &rho_inc, &omega, &build.omega_increments[j]);
        }
        self.finish(build, diffs, weights, forms)
    }

    /// Adds the `d^f` and `m^f` terms and pulls the sources back to `z`.
    fn finish(
        &self,
        build: &SurrogateBuild,
        diffs: &[Vec<f64>],
        weights: &[f64],
        mut forms: HessianForms,
    ) -> Result<Vec<f64>> {
        let p = self.problem;
        let state = &build.state;
        let dim = self.field.dim();
        let d_f: f64 = weights.iter().sum();
        let mut m_f = vec![0.0; dim];
        for (d, w) in diffs.iter().zip(weights) {
            for (a, b) in m_f.iter_mut().zip(d) {
                *a += w * b;
            }
        }
        let v = state.adjoint()?;
        let mo_u = p.region_mass().apply(&state.u);
        for (s, a) in forms.src_u.iter_mut().zip(&mo_u) {
            *s += 2.0 * d_f * a;
        }
        add(&mut forms.src_u, &p.apply_w(state, &m_f, v));
        add(&mut forms.src_v, &p.apply_w(state, &m_f, &state.u));
        let (src_u, src_v) = forms.into_sources();
        let rhs: Vec<f64> = src_v.iter().map(|x| -x).collect();
        let p_v = p.solve_linearized(state, &rhs)?;
        let mo_pv = p.region_mass().apply(&p_v);
        let rhs: Vec<f64> = src_u
            .iter()
            .zip(&mo_pv)
            .map(|(a, b)| -(a + 2.0 * b))
            .collect();
        let p_u = p.solve_linearized(state, &rhs)?;
        Ok(p.load_pairing(&p_u))
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn ratio(kept: f64, other: f64) -> f64 {
    let gap = kept - other;
    if gap == 0.0 {
        0.0
    } else {
        kept / gap
    }
}

fn row_major_r(r: &Matrix, rank: usize) -> Matrix {
    r.iter().map(|row| row[..rank].to_vec()).collect()
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Accumulates `sum_k c_k h(a_k, b_k)` contributions to the `u` and `v`
/// sources. The `W2` parts are gathered into one coefficient field.
struct HessianForms<'p> {
    problem: &'p DarcyProblem,
    state: &'p StateBundle,
    src_u: Vec<f64>,
    src_v: Vec<f64>,
    w2_u: Vec<f64>,
}

impl<'p> HessianForms<'p> {
    fn new(problem: &'p DarcyProblem, state: &'p StateBundle, dim: usize) -> Self {
        Self {
            problem,
            state,
            src_u: vec![0.0; dim],
            src_v: vec![0.0; dim],
            w2_u: vec![0.0; dim],
        }
    }

    fn add(&mut self, c: f64, a: &[f64], inc_a: &Increments, b: &[f64], inc_b: &Increments) {
        if c == 0.0 {
            return;
        }
        let p = self.problem;
        let s = self.state;
        let scaled = |x: Vec<f64>| x.into_iter().map(move |v| c * v);
        for (t, x) in self
            .src_v
            .iter_mut()
            .zip(scaled(p.apply_w(s, a, &inc_b.u_hat)))
        {
            *t += x;
        }
        for (t, x) in self
            .src_v
            .iter_mut()
            .zip(scaled(p.apply_w(s, b, &inc_a.u_hat)))
        {
            *t += x;
        }
        for (t, x) in self
            .src_u
            .iter_mut()
            .zip(scaled(p.apply_w(s, a, &inc_b.v_hat)))
        {
            *t += x;
        }
        for (t, x) in self
            .src_u
            .iter_mut()
            .zip(scaled(p.apply_w(s, b, &inc_a.v_hat)))
        {
            *t += x;
        }
        for ((t, x), y) in self.w2_u.iter_mut().zip(a).zip(b) {
            *t += c * x * y;
        }
    }

    /// `(src_u, src_v)` including `W2(a, b)` applied to `v` and `u`.
    fn into_sources(mut self) -> (Vec<f64>, Vec<f64>) {
        let p = self.problem;
        let s = self.state;
        if self.w2_u.iter().any(|x| *x != 0.0) {
            let v = s.v_f.as_ref().expect("adjoint attached by build_surrogate");
            add(&mut self.src_u, &p.apply_w(s, &self.w2_u, v));
            add(&mut self.src_v, &p.apply_w(s, &self.w2_u, &s.u));
        }
        (self.src_u, self.src_v)
    }
}
