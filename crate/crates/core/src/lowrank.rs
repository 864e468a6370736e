//! Randomized low-rank generalized eigendecomposition of a Hessian `H` with
//! respect to the prior precision `C^-1`: `H psi = lambda C^-1 psi` with
//! `<psi_n, C^-1 psi_n'> = delta_nn'`.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dense::{symmetric_eigen, zeros, Matrix, SymmetricEigen};
use crate::error::{invalid, Result};
use crate::field::{dot, DualVector, NodalField};
use crate::random_field::GaussianFieldModel;

/// Columns whose residual after orthogonalization falls below this fraction of
/// their initial `C^-1` norm are treated as linearly dependent.
pub const DROP_TOLERANCE: f64 = 1e-8;

/// Off-diagonal tolerance of the dense Jacobi eigensolver.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Result of a `C^-1`-weighted QR factorization `Y = Q R`.
#[derive(Clone, Debug)]
pub struct WeightedQr {
    pub q: Vec<NodalField>,
    /// `C^-1 q_j` for each column.
    pub cinv_q: Vec<DualVector>,
    /// `rank x ncols`; upper triangular when nothing was dropped.
    pub r: Matrix,
    /// Input columns that were found dependent and produced no `q`.
    pub dropped: Vec<usize>,
}

/// Modified Gram-Schmidt in the `C^-1` inner product with one
/// reorthogonalization pass.
pub fn weighted_qr(y: &[NodalField], field: &GaussianFieldModel) -> WeightedQr {
    let ncols = y.len();
    let mut q: Vec<NodalField> = Vec::new();
    let mut cinv_q: Vec<DualVector> = Vec::new();
    let mut r: Matrix = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in y.iter().enumerate() {
        let mut w = col.clone();
        let initial = libm::sqrt(dot(&w, &field.apply_precision(&w)).max(0.0));
        let mut coeffs = alloc::vec![0.0; q.len()];
        for _pass in 0..2 {
            for (i, (qi, ci)) in q.iter().zip(&cinv_q).enumerate() {
                let rij = dot(ci, &w);
                w.axpy(-rij, qi);
                coeffs[i] += rij;
            }
        }
        let cw = field.apply_precision(&w);
        let norm = libm::sqrt(dot(&w, &cw).max(0.0));
        for (row, c) in r.iter_mut().zip(&coeffs) {
            row[j] = *c;
        }
        if initial == 0.0 || !(norm > DROP_TOLERANCE * initial) {
            dropped.push(j);
            continue;
        }
        let mut row = alloc::vec![0.0; ncols];
        row[j] = norm;
        r.push(row);
        q.push(w.scaled(1.0 / norm));
        cinv_q.push(cw.scaled(1.0 / norm));
    }
    WeightedQr {
        q,
        cinv_q,
        r,
        dropped,
    }
}

/// Dominant generalized eigenpairs ordered by decreasing `|lambda|`.
#[derive(Clone, Debug, Default)]
pub struct EigenPairs {
    pub lambdas: Vec<f64>,
    pub psis: Vec<NodalField>,
    /// `C^-1 psi_n`, cached for evaluating `<m, C^-1 psi_n>` without solves.
    pub cinv_psis: Vec<DualVector>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// Everything computed by the double-pass eigensolver. The intermediates are
/// kept for reuse of incremental solves and for differentiating the
/// decomposition.
#[derive(Clone, Debug)]
pub struct DoublePass {
    pub pairs: EigenPairs,
    pub omega: Vec<Vec<f64>>,
    pub h_omega: Vec<DualVector>,
    pub qr: WeightedQr,
    pub h_q: Vec<DualVector>,
    /// Symmetrized `Q^T H Q`.
    pub t: Matrix,
    /// Full eigendecomposition of `t`; the first `pairs.len()` columns are kept.
    pub ritz: SymmetricEigen,
    /// Fewer than `N` independent directions were found.
    pub rank_deficient: bool,
}

/// Double-pass randomized eigensolver: `Y = C H Omega` with Gaussian `Omega`
/// of width `n + c`, `C^-1`-orthonormal `Q` spanning `Y`, then the
/// Rayleigh-Ritz problem `T = Q^T H Q`. Uses `2(n + c)` applications of `hess`.
pub fn double_pass_eigensolver<R: Rng + ?Sized>(
    hess: &mut dyn FnMut(&[f64]) -> Result<DualVector>,
    field: &GaussianFieldModel,
    n: usize,
    c: usize,
    rng: &mut R,
) -> Result<DoublePass> {
    if n == 0 {
        return Err(invalid("requested rank must be at least 1"));
    }
    if c > 10 {
        return Err(invalid("oversampling must not exceed 10"));
    }
    let dim = field.dim();
    let k = n + c;
    if k > dim {
        return Err(invalid(alloc::format!(
            "rank plus oversampling {k} exceeds dimension {dim}"
        )));
    }
    let omega: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let h_omega = omega.iter().map(|w| hess(w)).collect::<Result<Vec<_>>>()?;
    let y = h_omega
        .iter()
        .map(|x| field.apply_cov(x))
        .collect::<Result<Vec<_>>>()?;
    let qr = weighted_qr(&y, field);
    let h_q = qr.q.iter().map(|q| hess(q)).collect::<Result<Vec<_>>>()?;
    let rank = qr.q.len();
    let mut t = zeros(rank, rank);
    for i in 0..rank {
        for j in 0..rank {
            t[i][j] = 0.5 * (dot(&qr.q[i], &h_q[j]) + dot(&qr.q[j], &h_q[i]));
        }
    }
    let ritz = symmetric_eigen(&t, JACOBI_TOLERANCE);
    let kept = n.min(rank);
    let mut pairs = EigenPairs::default();
    for col in 0..kept {
        let mut psi = NodalField::zeros(dim);
        let mut cpsi = DualVector::zeros(dim);
        for j in 0..rank {
            let s = ritz.vectors[j][col];
            psi.axpy(s, &qr.q[j]);
            cpsi.axpy(s, &qr.cinv_q[j]);
        }
        pairs.lambdas.push(ritz.values[col]);
        pairs.psis.push(psi);
        pairs.cinv_psis.push(cpsi);
    }
    Ok(DoublePass {
        pairs,
        omega,
        h_omega,
        qr,
        h_q,
        t,
        ritz,
        rank_deficient: rank < n,
    })
}
