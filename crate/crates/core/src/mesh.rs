//! Structured P1 triangulation of the unit square.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::sparse::SparsityPattern;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

/// Uniform triangulation of `[0,1]^2` with `n` cells per side. Every square
/// cell is split along its lower-left to upper-right diagonal, so all
/// triangles are right triangles and the P1 stiffness matrix is an M-matrix.
#[derive(Clone, Debug)]
pub struct StructuredTriMesh {
    n: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    /// Gradients of the three barycentric basis functions per triangle.
    grads: Vec<[[f64; 2]; 3]>,
    areas: Vec<f64>,
    pattern: Arc<SparsityPattern>,
}

impl StructuredTriMesh {
    pub fn unit_square(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("mesh needs at least 2 cells per side"));
        }
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        let mut boundary = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push(Point::new(i as f64 / n as f64, j as f64 / n as f64));
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let mut grads = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let (g, a) = p1_gradients(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
            grads.push(g);
            areas.push(a);
        }
        let mut mesh = Self {
            n,
            vertices,
            triangles,
            boundary,
            grads,
            areas,
            pattern: Arc::new(SparsityPattern::empty()),
        };
        mesh.pattern = Arc::new(SparsityPattern::for_mesh(&mesh));
        Ok(mesh)
    }

    /// Shared sparsity pattern of all P1 operators on this mesh.
    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    /// Boolean mask over nodes, `true` on the boundary of the unit square.
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&i| self.boundary[i])
            .collect()
    }

    pub fn area(&self, tri: usize) -> f64 {
        self.areas[tri]
    }

    pub fn basis_gradients(&self, tri: usize) -> &[[f64; 2]; 3] {
        &self.grads[tri]
    }

    pub fn centroid(&self, tri: usize) -> Point {
        let [a, b, c] = self.triangles[tri];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        Point::new((pa.x + pb.x + pc.x) / 3.0, (pa.y + pb.y + pc.y) / 3.0)
    }

    /// Signed area of a triangle computed from its vertex coordinates.
    pub fn signed_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y))
    }

    /// Node index of grid point `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.vertices.iter().map(f).collect()
    }

    /// Value of the P1 field `values` at `p`; points outside the square are
    /// clamped onto it.
    pub fn evaluate(&self, values: &[f64], p: &Point) -> f64 {
        let n = self.n as f64;
        let x = p.x.clamp(0.0, 1.0) * n;
        let y = p.y.clamp(0.0, 1.0) * n;
        let i = (libm::floor(x) as usize).min(self.n - 1);
        let j = (libm::floor(y) as usize).min(self.n - 1);
        let (s, t) = (x - i as f64, y - j as f64);
        let v00 = values[self.node(i, j)];
        let v11 = values[self.node(i + 1, j + 1)];
        if s >= t {
            let v10 = values[self.node(i + 1, j)];
            v00 + s * (v10 - v00) + t * (v11 - v10)
        } else {
            let v01 = values[self.node(i, j + 1)];
            v00 + t * (v01 - v00) + s * (v11 - v01)
        }
    }

    /// Interpolates a P1 field given on `source` onto this mesh's nodes.
    pub fn transfer_from(&self, source: &StructuredTriMesh, values: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(source.num_vertices(), values.len())?;
        Ok(self
            .vertices
            .iter()
            .map(|p| source.evaluate(values, p))
            .collect())
    }

    /// Per-triangle `area * grad(a) . grad(b)` for two P1 fields.
    pub fn gradient_products(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.triangles
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let g = &self.grads[t];
                let ga = grad_of(g, tri, a);
                let gb = grad_of(g, tri, b);
                self.areas[t] * (ga[0] * gb[0] + ga[1] * gb[1])
            })
            .collect()
    }

    /// Constant gradient of a P1 field on one triangle.
    pub fn field_gradient(&self, tri: usize, values: &[f64]) -> [f64; 2] {
        grad_of(&self.grads[tri], &self.triangles[tri], values)
    }
}

fn grad_of(g: &[[f64; 2]; 3], tri: &[usize; 3], v: &[f64]) -> [f64; 2] {
    let (a, b, c) = (v[tri[0]], v[tri[1]], v[tri[2]]);
    [
        a * g[0][0] + b * g[1][0] + c * g[2][0],
        a * g[0][1] + b * g[1][1] + c * g[2][1],
    ]
}

fn p1_gradients(p0: &Point, p1: &Point, p2: &Point) -> ([[f64; 2]; 3], f64) {
    let det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    let area = 0.5 * det;
    let inv = 1.0 / det;
    let g0 = [(p1.y - p2.y) * inv, (p2.x - p1.x) * inv];
    let g1 = [(p2.y - p0.y) * inv, (p0.x - p2.x) * inv];
    let g2 = [(p0.y - p1.y) * inv, (p1.x - p0.x) * inv];
    ([g0, g1, g2], area)
}
