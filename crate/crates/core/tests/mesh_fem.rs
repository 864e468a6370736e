use chanceopt_core::fem::{
    apply_weighted_stiffness, assemble_mass, assemble_subdomain_mass, assemble_weighted_stiffness,
    assemble_well_loads, lumped_mass, stiffness_with_coefficient,
};
use chanceopt_core::field::{dot, norm2};
use chanceopt_core::{solve_spd, NodalField, Point, Rect, SolverOptions, StructuredTriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn mesh(n: usize) -> StructuredTriMesh {
    StructuredTriMesh::unit_square(n).unwrap()
}

#[test]
fn unit_stiffness_annihilates_constants() {
    let m = mesh(2);
    let a = assemble_weighted_stiffness(&m, &NodalField::constant(9, 1.0)).unwrap();
    for i in 0..9 {
        let s: f64 = a.row(i).map(|(_, v)| v).sum();
        assert!(s.abs() < 1e-14, "row {i} sums to {s}");
    }
}

#[test]
fn stiffness_scales_with_constant_weight() {
    let m = mesh(4);
    let nv = m.num_vertices();
    let a1 = assemble_weighted_stiffness(&m, &NodalField::constant(nv, 1.0)).unwrap();
    let a = assemble_weighted_stiffness(&m, &NodalField::constant(nv, 2.5)).unwrap();
    for i in 0..nv {
        for (j, v) in a.row(i) {
            assert_eq!(v, 2.5 * a1.get(i, j));
        }
    }
    let a = assemble_weighted_stiffness(&m, &NodalField::constant(nv, 0.37)).unwrap();
    for i in 0..nv {
        for (j, v) in a.row(i) {
            assert!((v - 0.37 * a1.get(i, j)).abs() <= 1e-15 * v.abs().max(1.0));
        }
    }
}

#[test]
fn stiffness_is_linear_in_the_coefficient() {
    let m = mesh(4);
    let nv = m.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c1: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c2: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + 3.0 * b).collect();
    let lhs = stiffness_with_coefficient(&m, &sum);
    let rhs =
        stiffness_with_coefficient(&m, &c1).add_scaled(3.0, &stiffness_with_coefficient(&m, &c2));
    for i in 0..nv {
        for (j, v) in lhs.row(i) {
            assert!((v - rhs.get(i, j)).abs() < 1e-13);
        }
    }
    // Matrix-free application matches the assembled operator.
    let x: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y1 = lhs.apply(&x);
    let y2 = apply_weighted_stiffness(&m, &sum, &x);
    for (a, b) in y1.iter().zip(&y2) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn lognormal_stiffness_is_psd_and_exactly_symmetric() {
    let m = mesh(8);
    let nv = m.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = NodalField(
        (0..nv)
            .map(|_| rng.random_range(-1.5f64..1.5).exp())
            .collect(),
    );
    let a = assemble_weighted_stiffness(&m, &w).unwrap();
    assert_eq!(a.asymmetry(), 0.0);
    assert_eq!(assemble_mass(&m).asymmetry(), 0.0);
    for _ in 0..100 {
        let x: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(a.quadratic_form(&x) >= -1e-12);
    }
}

#[test]
fn nonpositive_weight_rejected() {
    let m = mesh(2);
    let mut w = NodalField::constant(9, 1.0);
    w[4] = 0.0;
    assert!(assemble_weighted_stiffness(&m, &w).is_err());
    w[4] = -1.0;
    assert!(assemble_weighted_stiffness(&m, &w).is_err());
}

#[test]
fn mass_integrates_exactly() {
    let m = mesh(4);
    let mass = assemble_mass(&m);
    let ones = vec![1.0; m.num_vertices()];
    assert!((mass.quadratic_form(&ones) - 1.0).abs() < 1e-14);
    let x1 = m.interpolate(|p| p.x);
    assert!((dot(&ones, &mass.apply(&x1)) - 0.5).abs() < 1e-14);
    let lumped = lumped_mass(&mass);
    assert!((lumped.iter().sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn mass_is_positive_definite() {
    let m = mesh(4);
    let dense = assemble_mass(&m).to_dense();
    let n = dense.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]);
    let eig = nalgebra::SymmetricEigen::new(mat);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "smallest mass eigenvalue {min}");
}

#[test]
fn subdomain_mass_matches_closed_forms() {
    let m = mesh(8);
    let region = Rect::new(0.25, 0.75, 0.25, 0.75);
    let mo = assemble_subdomain_mass(&m, &region).unwrap();
    let nv = m.num_vertices();
    assert!((mo.quadratic_form(&vec![1.0; nv]) - 0.25).abs() < 1e-14);
    assert_eq!(mo.quadratic_form(&vec![0.0; nv]), 0.0);
    let x1 = m.interpolate(|p| p.x);
    let exact = 0.5 * (0.75f64.powi(3) - 0.25f64.powi(3)) / 3.0;
    assert!((mo.quadratic_form(&x1) - exact).abs() < 1e-14);
}

#[test]
fn misaligned_subdomain_rejected() {
    let m = mesh(6);
    assert!(assemble_subdomain_mass(&m, &Rect::new(0.25, 0.75, 0.25, 0.75)).is_err());
    let m = mesh(8);
    assert!(assemble_subdomain_mass(&m, &Rect::new(0.25, 1.5, 0.25, 0.75)).is_err());
}

#[test]
fn well_load_mass_matches_gaussian_integral() {
    let m = mesh(32);
    let mass = assemble_mass(&m);
    let eps = 0.1;
    let loads = assemble_well_loads(&m, &mass, &[Point::new(0.5, 0.5)], eps).unwrap();
    let total: f64 = loads[0].iter().sum();
    let exact = PI * eps * eps;
    assert!((total - exact).abs() / exact < 0.05, "{total} vs {exact}");
    // Peak sits at the center node.
    let center = m.node(16, 16);
    let imax = (0..m.num_vertices())
        .max_by(|&a, &b| loads[0][a].total_cmp(&loads[0][b]))
        .unwrap();
    assert_eq!(imax, center);
}

#[test]
fn mirrored_wells_have_mirrored_loads() {
    let m = mesh(16);
    let mass = assemble_mass(&m);
    // The diagonal split is invariant under the point reflection through the
    // center and under transposition, not under x -> 1 - x.
    let loads = assemble_well_loads(
        &m,
        &mass,
        &[
            Point::new(0.25, 0.375),
            Point::new(0.75, 0.625),
            Point::new(0.375, 0.25),
        ],
        0.1,
    )
    .unwrap();
    for j in 0..=16 {
        for i in 0..=16 {
            let a = loads[0][m.node(i, j)];
            let b = loads[1][m.node(16 - i, 16 - j)];
            let c = loads[2][m.node(j, i)];
            assert!((a - c).abs() < 1e-15, "({i},{j}) {a} {c}");
            assert!((a - b).abs() < 1e-15, "({i},{j}) {a} {b}");
        }
    }
}

#[test]
fn well_load_errors() {
    let m = mesh(4);
    let mass = assemble_mass(&m);
    assert!(assemble_well_loads(&m, &mass, &[], 0.1).is_err());
    assert!(assemble_well_loads(&m, &mass, &[Point::new(0.5, 0.5)], 0.0).is_err());
    assert!(assemble_well_loads(&m, &mass, &[Point::new(1.5, 0.5)], 0.1).is_err());
}

fn manufactured_error(n: usize) -> f64 {
    let m = mesh(n);
    let nv = m.num_vertices();
    let a = assemble_weighted_stiffness(&m, &NodalField::constant(nv, 1.0)).unwrap();
    let mass = assemble_mass(&m);
    let src = m.interpolate(|p| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin());
    let rhs = mass.apply(&src);
    let (u, _) = solve_spd(&a, &rhs, Some(m.boundary_mask()), &SolverOptions::default()).unwrap();
    let exact = m.interpolate(|p| (PI * p.x).sin() * (PI * p.y).sin());
    u.iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| manufactured_error(n)).collect();
    assert!(errs[0] < 0.05);
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 3.5, "error ratio {} ({errs:?})", w[0] / w[1]);
    }
}

#[test]
fn solver_edge_cases() {
    let m = mesh(8);
    let nv = m.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = NodalField(
        (0..nv)
            .map(|_| rng.random_range(-1.0f64..1.0).exp())
            .collect(),
    );
    let a = assemble_weighted_stiffness(&m, &w).unwrap();
    let opts = SolverOptions::default();
    let (x, _) = solve_spd(&a, &vec![0.0; nv], Some(m.boundary_mask()), &opts).unwrap();
    assert!(x.iter().all(|v| *v == 0.0));

    let mut b: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    for i in m.boundary_nodes() {
        b[i] = 0.0;
    }
    let (x, stats) = solve_spd(&a, &b, Some(m.boundary_mask()), &opts).unwrap();
    for i in m.boundary_nodes() {
        assert_eq!(x[i], 0.0);
    }
    let reduced = a.eliminate_dirichlet(m.boundary_mask());
    assert_eq!(reduced.asymmetry(), 0.0);
    let r: Vec<f64> = reduced
        .apply(&x)
        .iter()
        .zip(&b)
        .map(|(p, q)| p - q)
        .collect();
    assert!(
        norm2(&r) <= 1e-10 * norm2(&b) * 1.0001,
        "{} {:?}",
        norm2(&r) / norm2(&b),
        stats
    );

    let tight = SolverOptions {
        rtol: 1e-10,
        max_iter_factor: 0,
    };
    assert!(matches!(
        solve_spd(&a, &b, Some(m.boundary_mask()), &tight),
        Err(chanceopt_core::Error::SolverFailure { .. })
    ));
}

#[test]
fn evaluation_and_transfer_reproduce_linear_fields() {
    let coarse = StructuredTriMesh::unit_square(4).unwrap();
    let fine = StructuredTriMesh::unit_square(12).unwrap();
    let f = |p: &Point| 0.3 - 1.2 * p.x + 2.5 * p.y;
    let v = coarse.interpolate(f);
    for p in [
        Point::new(0.13, 0.71),
        Point::new(0.5, 0.5),
        Point::new(0.99, 0.02),
    ] {
        assert!((coarse.evaluate(&v, &p) - f(&p)).abs() <= 1e-13);
    }
    // Outside points clamp onto the square.
    assert!(
        (coarse.evaluate(&v, &Point::new(-1.0, 2.0)) - f(&Point::new(0.0, 1.0))).abs() <= 1e-13
    );
    let moved = fine.transfer_from(&coarse, &v).unwrap();
    for (a, p) in moved.iter().zip(fine.vertices()) {
        assert!((a - f(p)).abs() <= 1e-13);
    }
    // Refinement by an integer factor keeps the coarse nodal values.
    let g = coarse.interpolate(|p| (p.x * 7.0).sin() * p.y);
    let up = fine.transfer_from(&coarse, &g).unwrap();
    for (k, p) in coarse.vertices().iter().enumerate() {
        let i = (p.x * 12.0).round() as usize;
        let j = (p.y * 12.0).round() as usize;
        assert!((up[fine.node(i, j)] - g[k]).abs() <= 1e-14);
    }
    assert!(fine.transfer_from(&coarse, &up).is_err());
}
