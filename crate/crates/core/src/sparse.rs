//! Compressed-row sparse storage for the symmetric FE operators.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::StructuredTriMesh;

/// Row-compressed sparsity pattern of the P1 operators on a mesh, together
/// with the value slots each triangle scatters into.
#[derive(Debug)]
pub struct SparsityPattern {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// For each triangle the 3x3 value positions, row-major in local order.
    tri_slots: Vec<[usize; 9]>,
}

impl SparsityPattern {
    pub(crate) fn empty() -> Self {
        Self {
            dim: 0,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            tri_slots: Vec::new(),
        }
    }

    pub fn for_mesh(mesh: &StructuredTriMesh) -> Self {
        let dim = mesh.num_vertices();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for tri in mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    rows[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let mut pattern = Self {
            dim,
            row_ptr,
            col_idx,
            tri_slots: Vec::new(),
        };
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [0usize; 9];
                for (a, &ra) in tri.iter().enumerate() {
                    for (b, &cb) in tri.iter().enumerate() {
                        s[3 * a + b] = pattern.position(ra, cb).expect("entry in pattern");
                    }
                }
                s
            })
            .collect();
        pattern.tri_slots = slots;
        pattern
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_ptr[row];
        let cols = &self.col_idx[start..self.row_ptr[row + 1]];
        cols.binary_search(&col).ok().map(|k| start + k)
    }

    pub(crate) fn tri_slots(&self, tri: usize) -> &[usize; 9] {
        &self.tri_slots[tri]
    }
}

/// Symmetric sparse matrix sharing its pattern with the other operators on
/// the same mesh.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .position(row, col)
            .map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// Iterator over `(col, value)` pairs of one row.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_ptr[row]..self.pattern.row_ptr[row + 1];
        self.pattern.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// `y = A x`
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &*self.pattern;
        for (i, yi) in y.iter_mut().enumerate().take(p.dim) {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        crate::field::dot(x, &self.apply(x))
    }

    /// `self + alpha * other` for operators sharing a pattern.
    pub fn add_scaled(&self, alpha: f64, other: &SparseOperator) -> SparseOperator {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern),
            "pattern mismatch"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        SparseOperator {
            pattern: self.pattern.clone(),
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> SparseOperator {
        SparseOperator {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Symmetric elimination of the masked rows and columns: they are zeroed
    /// and the diagonal entry is set to one.
    pub fn eliminate_dirichlet(&self, mask: &[bool]) -> SparseOperator {
        let p = &*self.pattern;
        let mut values = self.values.clone();
        for i in 0..p.dim {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                if mask[i] || mask[j] {
                    values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        SparseOperator {
            pattern: self.pattern.clone(),
            values,
        }
    }

    /// Largest `|A_ij - A_ji|` over the stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense row-major copy, for small-mesh checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}
