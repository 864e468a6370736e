//! P1 finite-element assembly on [`StructuredTriMesh`].
//!
//! Coefficients enter through nodal values; the per-triangle coefficient is
//! the arithmetic mean of the three vertex values. The same rule is used for
//! the stiffness, its parameter derivatives and the gradient assembly, so the
//! discrete derivative chain is exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Result};
use crate::field::{DualVector, NodalField};
use crate::mesh::{Point, Rect, StructuredTriMesh};
use crate::sparse::SparseOperator;

fn local_stiffness(mesh: &StructuredTriMesh, t: usize) -> [[f64; 3]; 3] {
    let g = mesh.basis_gradients(t);
    let area = mesh.area(t);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

fn tri_mean(tri: &[usize; 3], nodal: &[f64]) -> f64 {
    (nodal[tri[0]] + nodal[tri[1]] + nodal[tri[2]]) / 3.0
}

fn assemble_with(
    mesh: &StructuredTriMesh,
    mut local: impl FnMut(usize) -> [[f64; 3]; 3],
) -> SparseOperator {
    let mut op = SparseOperator::zeros(mesh.pattern().clone());
    let pattern = mesh.pattern().clone();
    let values = op.values_mut();
    for t in 0..mesh.num_triangles() {
        let k = local(t);
        let slots = pattern.tri_slots(t);
        for a in 0..3 {
            for b in 0..3 {
                values[slots[3 * a + b]] += k[a][b];
            }
        }
    }
    op
}

/// Stiffness matrix `sum_T w_T int_T grad(phi_i) . grad(phi_j)` with `w_T`
/// the vertex mean of the nodal coefficient. No sign check; used for the
/// parameter-derivative forms.
pub fn stiffness_with_coefficient(mesh: &StructuredTriMesh, coef: &[f64]) -> SparseOperator {
    let tris = mesh.triangles();
    assemble_with(mesh, |t| {
        let w = tri_mean(&tris[t], coef);
        let mut k = local_stiffness(mesh, t);
        k.iter_mut().flatten().for_each(|v| *v *= w);
        k
    })
}

/// Weighted stiffness for a strictly positive nodal coefficient such as
/// `exp(m) / mu`.
pub fn assemble_weighted_stiffness(
    mesh: &StructuredTriMesh,
    weight: &NodalField,
) -> Result<SparseOperator> {
    check_len(mesh.num_vertices(), weight.len())?;
    if let Some(bad) = weight.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(invalid(alloc::format!(
            "stiffness weight must be positive and finite, found {bad}"
        )));
    }
    Ok(stiffness_with_coefficient(mesh, weight))
}

/// Matrix-free `y = W(coef) x` with the same coefficient rule as
/// [`stiffness_with_coefficient`].
pub fn apply_weighted_stiffness(mesh: &StructuredTriMesh, coef: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let w = tri_mean(tri, coef);
        if w == 0.0 {
            continue;
        }
        let k = local_stiffness(mesh, t);
        for a in 0..3 {
            let mut acc = 0.0;
            for b in 0..3 {
                acc += k[a][b] * x[tri[b]];
            }
            y[tri[a]] += w * acc;
        }
    }
    y
}

/// Dual vector `d` with `<mt, d> = sum_T mean_T(mt * coef) * s_T` for all
/// nodal `mt`, where `s_T` are per-triangle values.
pub fn triangle_values_to_dual(
    mesh: &StructuredTriMesh,
    per_tri: &[f64],
    coef: &[f64],
) -> DualVector {
    let mut d = vec![0.0; mesh.num_vertices()];
    for (tri, s) in mesh.triangles().iter().zip(per_tri) {
        for &v in tri {
            d[v] += s;
        }
    }
    for (di, c) in d.iter_mut().zip(coef) {
        *di *= c / 3.0;
    }
    DualVector(d)
}

pub fn assemble_mass(mesh: &StructuredTriMesh) -> SparseOperator {
    assemble_mass_on(mesh, |_| true)
}

fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn assemble_mass_on(mesh: &StructuredTriMesh, keep: impl Fn(usize) -> bool) -> SparseOperator {
    assemble_with(mesh, |t| {
        if keep(t) {
            local_mass(mesh.area(t))
        } else {
            [[0.0; 3]; 3]
        }
    })
}

/// Row sums of the consistent mass matrix.
pub fn lumped_mass(mass: &SparseOperator) -> Vec<f64> {
    (0..mass.dim())
        .map(|i| mass.row(i).map(|(_, v)| v).sum())
        .collect()
}

/// Mass matrix restricted to the triangles inside `region`. The region edges
/// must coincide with mesh lines.
pub fn assemble_subdomain_mass(mesh: &StructuredTriMesh, region: &Rect) -> Result<SparseOperator> {
    let n = mesh.cells_per_side() as f64;
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if !(in_unit(region.x0) && in_unit(region.x1) && in_unit(region.y0) && in_unit(region.y1))
        || region.x0 >= region.x1
        || region.y0 >= region.y1
    {
        return Err(invalid(
            "subdomain must be a non-empty box inside the unit square",
        ));
    }
    for edge in [region.x0, region.x1, region.y0, region.y1] {
        let scaled = edge * n;
        if (scaled - libm::round(scaled)).abs() > 1e-9 {
            return Err(invalid(alloc::format!(
                "subdomain edge {edge} is not aligned with a {} x {} mesh",
                mesh.cells_per_side(),
                mesh.cells_per_side()
            )));
        }
    }
    Ok(assemble_mass_on(mesh, |t| {
        region.contains(&mesh.centroid(t))
    }))
}

/// Load vectors `(b_l)_i = int h_l phi_i` for Gaussian mollifiers
/// `h_l(x) = exp(-|x - x_l|^2 / eps^2)` interpolated at the nodes.
pub fn assemble_well_loads(
    mesh: &StructuredTriMesh,
    mass: &SparseOperator,
    wells: &[Point],
    epsilon: f64,
) -> Result<Vec<DualVector>> {
    if wells.is_empty() {
        return Err(invalid("at least one well is required"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("mollifier width must be positive"));
    }
    wells
        .iter()
        .map(|c| {
            if !(c.x > 0.0 && c.x < 1.0 && c.y > 0.0 && c.y < 1.0) {
                return Err(invalid(alloc::format!(
                    "well ({}, {}) outside the open unit square",
                    c.x,
                    c.y
                )));
            }
            let h = mesh.interpolate(|p| libm::exp(-p.dist2(c) / (epsilon * epsilon)));
            Ok(DualVector(mass.apply(&h)))
        })
        .collect()
}
