//! Small dense symmetric linear algebra on row-major `Vec<Vec<f64>>` matrices.

use alloc::vec;
use alloc::vec::Vec;

pub type Matrix = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![0.0; cols]; rows]
}

pub fn identity(n: usize) -> Matrix {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn transpose(a: &Matrix) -> Matrix {
    if a.is_empty() {
        return Vec::new();
    }
    let (r, c) = (a.len(), a[0].len());
    let mut t = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    let mut out = zeros(a.len(), cols);
    for (i, row) in a.iter().enumerate() {
        for k in 0..inner {
            let aik = row[k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..cols {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[i][j]` is component `i` of eigenvector `j`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is below
/// `tol` times the full norm. The input is symmetrized first. Eigenpairs are
/// ordered by decreasing `|lambda|`, ties by original index.
pub fn symmetric_eigen(a: &Matrix, tol: f64) -> SymmetricEigen {
    let n = a.len();
    let mut m = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    let mut v = identity(n);
    let total: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>();
    let off = |m: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i][j] * m[i][j];
                }
            }
        }
        s
    };
    let threshold = tol * tol * total;
    for _sweep in 0..100 {
        if off(&m) <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].abs().total_cmp(&m[i][i].abs()).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let mut vectors = zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r][col] = v[r][src];
        }
    }
    SymmetricEigen { values, vectors }
}

/// Solves `R^T x = b` for upper-triangular `R`.
pub fn solve_upper_transpose(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= r[k][i] * x[k];
        }
        x[i] = s / r[i][i];
    }
    x
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn solve_upper(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= r[i][k] * x[k];
        }
        x[i] = s / r[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_a_known_matrix() {
        let a = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, -5.0],
        ];
        let e = symmetric_eigen(&a, 1e-14);
        assert!((e.values[0] + 5.0).abs() < 1e-13);
        assert!((e.values[1] - 3.0).abs() < 1e-13);
        assert!((e.values[2] - 1.0).abs() < 1e-13);
        let av = matmul(&a, &e.vectors);
        for j in 0..3 {
            for i in 0..3 {
                assert!((av[i][j] - e.values[j] * e.vectors[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upper_transpose_solve() {
        let r = vec![vec![2.0, 1.0], vec![0.0, 4.0]];
        let x = solve_upper_transpose(&r, &[2.0, 9.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        let y = solve_upper(&r, &[4.0, 8.0]);
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 2.0).abs() < 1e-15);
    }
}
