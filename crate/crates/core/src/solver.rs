//! Jacobi-preconditioned conjugate gradients with homogeneous Dirichlet
//! masking.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{dot, norm2};
use crate::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `||r|| <= rtol ||b||`.
    pub rtol: f64,
    /// Iteration cap as a multiple of the system dimension.
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` on the unmasked nodes with `x = 0` on masked nodes.
///
/// Masked rows and columns of `op` are ignored, so the operator may be passed
/// either raw or already Dirichlet-eliminated. An empty mask (or `None`) solves
/// the full system.
pub fn solve_spd(
    op: &SparseOperator,
    rhs: &[f64],
    dirichlet: Option<&[bool]>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    crate::error::check_len(n, rhs.len())?;
    let free = |i: usize| dirichlet.is_none_or(|m| !m[i]);

    let mut b = rhs.to_vec();
    for (i, bi) in b.iter_mut().enumerate() {
        if !free(i) {
            *bi = 0.0;
        }
    }
    let bnorm = norm2(&b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| if free(i) && d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let apply = |p: &[f64], out: &mut [f64]| {
        op.apply_into(p, out);
        for (i, o) in out.iter_mut().enumerate() {
            if !free(i) {
                *o = 0.0;
            }
        }
    };

    let mut r = b;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = opts.max_iter_factor * n;
    let target = opts.rtol * bnorm;
    let mut rnorm = bnorm;

    for it in 1..=cap {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: rnorm / bnorm,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        iterations: cap,
        residual: rnorm / bnorm,
    })
}
