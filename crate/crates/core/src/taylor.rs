//! Taylor surrogates of the constraint functional around the mean field.
//!
//! With `d = m - m_bar`,
//! `T0 = f_bar`, `T1 = T0 + <d, g>` and
//! `T2 = T1 + 1/2 sum_n lambda_n <d, C^-1 psi_n>^2`,
//! where `(lambda_n, psi_n)` are the dominant generalized eigenpairs of the
//! Hessian. Once built, evaluation needs no PDE solves.

use alloc::vec::Vec;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::darcy::{DarcyProblem, StateBundle};
use crate::error::{check_len, invalid, Result};
use crate::field::{dot, DualVector, NodalField};
use crate::lowrank::{double_pass_eigensolver, DoublePass, EigenPairs};
use crate::random_field::GaussianFieldModel;

/// Rank, oversampling and sketch seed of the randomized eigensolver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LowRankOptions {
    pub rank: usize,
    pub oversampling: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TaylorSurrogate {
    pub f_bar: f64,
    pub grad: DualVector,
    pub pairs: EigenPairs,
    pub mean: NodalField,
}

impl TaylorSurrogate {
    pub fn new(f_bar: f64, grad: DualVector, pairs: EigenPairs, mean: NodalField) -> Result<Self> {
        check_len(mean.len(), grad.len())?;
        for (p, c) in pairs.psis.iter().zip(&pairs.cinv_psis) {
            check_len(mean.len(), p.len())?;
            check_len(mean.len(), c.len())?;
        }
        if pairs.psis.len() != pairs.lambdas.len() || pairs.cinv_psis.len() != pairs.lambdas.len() {
            return Err(invalid("eigenpair arrays have inconsistent lengths"));
        }
        Ok(Self {
            f_bar,
            grad,
            pairs,
            mean,
        })
    }

    /// Projections `<m - m_bar, C^-1 psi_n>`.
    pub fn coordinates(&self, m: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = m.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect();
        self.pairs.cinv_psis.iter().map(|c| dot(&d, c)).collect()
    }

    /// `[T0, T1, T2]` at `m`.
    pub fn eval_all(&self, m: &[f64]) -> [f64; 3] {
        let d: Vec<f64> = m.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect();
        let t0 = self.f_bar;
        let t1 = t0 + dot(&d, &self.grad);
        let quad: f64 = self
            .pairs
            .lambdas
            .iter()
            .zip(&self.pairs.cinv_psis)
            .map(|(l, c)| {
                let a = dot(&d, c);
                l * a * a
            })
            .sum();
        [t0, t1, t1 + 0.5 * quad]
    }

    pub fn eval_taylor(&self, m: &[f64], order: usize) -> Result<f64> {
        check_len(self.mean.len(), m.len())?;
        if order > 2 {
            return Err(invalid(alloc::format!(
                "Taylor order {order} is not one of 0, 1, 2"
            )));
        }
        Ok(self.eval_all(m)[order])
    }
}

/// `E[T2 q] = q(m_bar) + 1/2 sum_n lambda_n^q`, the Gaussian mean of the
/// quadratic expansion with the trace replaced by its low-rank estimate.
pub fn expected_t2_objective(q_bar: f64, lambdas_q: &[f64]) -> f64 {
    q_bar + 0.5 * lambdas_q.iter().sum::<f64>()
}

/// Incremental state and adjoint for one Hessian direction.
#[derive(Clone, Debug)]
pub struct Increments {
    pub u_hat: NodalField,
    pub v_hat: NodalField,
}

/// A surrogate together with the state, the eigensolver intermediates and all
/// incremental fields produced while building it.
#[derive(Clone, Debug)]
pub struct SurrogateBuild {
    pub surrogate: TaylorSurrogate,
    pub state: StateBundle,
    pub decomposition: DoublePass,
    /// Increments at the sketch directions `omega_j`.
    pub omega_increments: Vec<Increments>,
    /// Increments at the orthonormal basis `q_j`.
    pub q_increments: Vec<Increments>,
}

impl SurrogateBuild {
    /// Increments at `psi_n = sum_j S_jn q_j`, recovered by linearity from the
    /// basis increments without further solves.
    pub fn eigen_increments(&self) -> Vec<Increments> {
        let ritz = &self.decomposition.ritz;
        let dim = self.surrogate.mean.len();
        (0..self.surrogate.pairs.len())
            .map(|col| {
                let mut u_hat = NodalField::zeros(dim);
                let mut v_hat = NodalField::zeros(dim);
                for (j, inc) in self.q_increments.iter().enumerate() {
                    let s = ritz.vectors[j][col];
                    u_hat.axpy(s, &inc.u_hat);
                    v_hat.axpy(s, &inc.v_hat);
                }
                Increments { u_hat, v_hat }
            })
            .collect()
    }
}

/// Builds the quadratic surrogate of `f` at `(m_bar, z)`: one state solve,
/// one adjoint solve and `2(rank + oversampling)` Hessian actions of two
/// linearized solves each.
pub fn build_surrogate(
    problem: &DarcyProblem,
    field: &GaussianFieldModel,
    z: &[f64],
    opts: &LowRankOptions,
) -> Result<SurrogateBuild> {
    let mean = field.mean().clone();
    let mut state = problem.solve_state(&mean, z)?;
    problem.attach_adjoint(&mut state)?;
    let f_bar = problem.eval_f(&state.u);
    let grad = problem.grad_m_f(&state)?;

    let mut increments: Vec<Increments> = Vec::new();
    let decomposition = {
        let mut hess = |dir: &[f64]| -> Result<DualVector> {
            let h = problem.hess_action_full(&state, dir)?;
            increments.push(Increments {
                u_hat: h.u_hat,
                v_hat: h.v_hat,
            });
            Ok(h.value)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        double_pass_eigensolver(&mut hess, field, opts.rank, opts.oversampling, &mut rng)?
    };
    let k = decomposition.omega.len();
    let q_increments = increments.split_off(k);
    let surrogate = TaylorSurrogate::new(f_bar, grad, decomposition.pairs.clone(), mean)?;
    Ok(SurrogateBuild {
        surrogate,
        state,
        decomposition,
        omega_increments: increments,
        q_increments,
    })
}
