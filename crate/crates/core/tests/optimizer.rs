use chanceopt_core::darcy::SolveCounts;
use chanceopt_core::optimizer::{GrowthRule, InnerStatus};
use chanceopt_core::{
    continuation_solve, lbfgs_bound, Bounds, ContinuationSchedule, CostGradEngine, DarcyParams,
    DarcyProblem, EngineKind, Evaluation, GaussianFieldModel, LbfgsOptions, LowRankOptions,
    NodalField, SampleSet, SmoothingParams, SolverOptions, StructuredTriMesh, TaylorGradient,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Setup {
    problem: DarcyProblem,
    field: GaussianFieldModel,
    samples: SampleSet,
}

fn setup(n: usize, mu: f64, samples: usize) -> Setup {
    let mesh = StructuredTriMesh::unit_square(n).unwrap();
    let params = DarcyParams {
        mu,
        ..DarcyParams::default()
    };
    let problem = DarcyProblem::new(mesh.clone(), params, SolverOptions::default()).unwrap();
    let prior = GaussianFieldModel::centered(&mesh, 0.1, 10.0, SolverOptions::default()).unwrap();
    let field = prior
        .with_mean(prior.sample(&mut ChaCha8Rng::seed_from_u64(2)).unwrap())
        .unwrap();
    let samples = SampleSet::generate(&field, 21, samples).unwrap();
    Setup {
        problem,
        field,
        samples,
    }
}

fn engine<'a>(
    s: &'a Setup,
    kind: EngineKind,
    rank: usize,
    oversampling: usize,
    smoothing: SmoothingParams,
) -> CostGradEngine<'a> {
    let lr = LowRankOptions {
        rank,
        oversampling,
        seed: 5,
    };
    CostGradEngine::new(kind, &s.problem, &s.field, &s.samples, lr, smoothing).unwrap()
}

fn design(seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..25).map(|_| rng.random_range(14.0..22.0)).collect()
}

/// Largest relative deviation of the gradient from central differences along
/// three random directions.
fn fd_error(e: &mut CostGradEngine<'_>, z: &[f64]) -> f64 {
    let g = e.evaluate(z).unwrap().grad;
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        use rand::Rng;
        let d: Vec<f64> = (0..z.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zp: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        let fd = (e.evaluate(&zp).unwrap().cost - e.evaluate(&zm).unwrap().cost) / (2.0 * h);
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - an).abs() / an.abs());
    }
    worst
}

#[test]
fn saa_gradient_matches_finite_differences() {
    let s = setup(16, 2.56, 32);
    let mut e = engine(
        &s,
        EngineKind::Saa,
        5,
        5,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    );
    let z = design(1);
    assert!(e.evaluate(&z).unwrap().chance > s.problem.params().alpha);
    let err = fd_error(&mut e, &z);
    assert!(err <= 1e-5, "{err}");
}

#[test]
fn exact_taylor_gradient_matches_finite_differences() {
    let s = setup(16, 2.56, 64);
    let mut e = engine(
        &s,
        EngineKind::Taylor2,
        5,
        5,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    );
    assert_eq!(e.gradient_mode(), TaylorGradient::Exact);
    let err = fd_error(&mut e, &design(1));
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn frozen_taylor_gradient_is_close_but_not_exact() {
    let s = setup(16, 2.56, 64);
    let mut e = engine(
        &s,
        EngineKind::Taylor2,
        5,
        5,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    )
    .with_gradient(TaylorGradient::Frozen);
    let err = fd_error(&mut e, &design(1));
    assert!(err > 1e-6 && err < 0.5, "{err}");
}

#[test]
fn zero_penalty_weight_leaves_the_deterministic_gradient() {
    let s = setup(8, 2.56, 8);
    let z = design(2);
    let p = &s.problem;
    let want: Vec<f64> = p
        .grad_q(&z)
        .iter()
        .zip(p.grad_penalty(&z))
        .map(|(a, b)| a + b)
        .collect();
    for kind in [EngineKind::Saa, EngineKind::Taylor2] {
        let mut e = engine(&s, kind, 4, 2, SmoothingParams::new(8.0, 0.0).unwrap());
        let ev = e.evaluate(&z).unwrap();
        assert_eq!(ev.grad, want);
        assert_eq!(ev.cost, p.eval_q(&z) + p.eval_penalty(&z));
    }
}

#[test]
fn cost_at_zero_extraction() {
    let s = setup(8, 2.56, 8);
    let z = vec![0.0; 25];
    let params = s.problem.params().clone();
    for kind in [EngineKind::Saa, EngineKind::Taylor2] {
        let mut e = engine(&s, kind, 4, 2, SmoothingParams::new(8.0, 1e3).unwrap());
        let ev = e.evaluate(&z).unwrap();
        // u = 0 everywhere, so f = -f_c for every sample.
        let chance = 1.0 / (1.0 + (2.0 * 8.0 * params.f_c).exp());
        assert!((ev.chance - chance).abs() <= 1e-15);
        let q = params.target.iter().map(|t| t * t).sum::<f64>() / 25.0;
        assert!((ev.cost - q).abs() <= 1e-12 * q);
        let want: Vec<f64> = params.target.iter().map(|t| -2.0 * t / 25.0).collect();
        for (a, b) in ev.grad.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn solve_counts_per_evaluation() {
    let s = setup(8, 2.56, 16);
    let z = design(3);
    let mut e = engine(
        &s,
        EngineKind::Saa,
        10,
        3,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    );
    let ev = e.evaluate(&z).unwrap();
    assert!(ev.chance > 0.05);
    assert_eq!(
        ev.solves,
        SolveCounts {
            state: 16,
            linearized: 16
        }
    );

    let mut e = engine(
        &s,
        EngineKind::Taylor2,
        10,
        3,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    )
    .with_gradient(TaylorGradient::Frozen);
    let ev = e.evaluate(&z).unwrap();
    assert_eq!(
        ev.solves,
        SolveCounts {
            state: 1,
            linearized: 4 * 13 + 3
        }
    );
    let mut e = e.with_gradient(TaylorGradient::Exact);
    let ev = e.evaluate(&z).unwrap();
    assert_eq!(
        ev.solves,
        SolveCounts {
            state: 1,
            linearized: 6 * 13 + 3
        }
    );

    // Without an active penalty only the surrogate is built.
    let mut e = engine(
        &s,
        EngineKind::Taylor2,
        10,
        3,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    );
    let ev = e.evaluate(&[1.0; 25]).unwrap();
    assert!(ev.chance < 0.05);
    assert_eq!(
        ev.solves,
        SolveCounts {
            state: 1,
            linearized: 4 * 13 + 1
        }
    );
}

#[test]
fn evaluations_are_deterministic() {
    let s = setup(8, 2.56, 16);
    let z = design(4);
    for kind in [EngineKind::Saa, EngineKind::Taylor2] {
        let mut a = engine(&s, kind, 4, 2, SmoothingParams::new(16.0, 1e4).unwrap());
        let mut b = engine(&s, kind, 4, 2, SmoothingParams::new(16.0, 1e4).unwrap());
        let (x, y) = (a.evaluate(&z).unwrap(), b.evaluate(&z).unwrap());
        assert_eq!(x.cost, y.cost);
        assert_eq!(x.grad, y.grad);
        let again = a.evaluate(&z).unwrap();
        assert_eq!(again.grad, x.grad);
    }
}

/// Mirror of a nodal field across the diagonal `x = y`.
fn transpose_nodes(n: usize, v: &[f64]) -> Vec<f64> {
    let np = n + 1;
    (0..np * np).map(|k| v[(k % np) * np + k / np]).collect()
}

fn transpose_wells(z: &[f64]) -> Vec<f64> {
    (0..25).map(|k| z[(k % 5) * 5 + k / 5]).collect()
}

#[test]
fn saa_gradient_respects_diagonal_symmetry() {
    // The diagonal split is invariant under x <-> y, so a symmetric mean and a
    // sample set closed under the mirror give a mirrored gradient.
    let n = 8;
    let mesh = StructuredTriMesh::unit_square(n).unwrap();
    let params = DarcyParams {
        mu: 2.56,
        ..DarcyParams::default()
    };
    let problem = DarcyProblem::new(mesh.clone(), params, SolverOptions::default()).unwrap();
    let prior = GaussianFieldModel::centered(&mesh, 0.1, 10.0, SolverOptions::default()).unwrap();
    let raw = prior.sample(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mt = transpose_nodes(n, &raw);
    let mean = NodalField(raw.iter().zip(&mt).map(|(a, b)| 0.5 * (a + b)).collect());
    let field = prior.with_mean(mean).unwrap();
    let base = SampleSet::generate(&field, 3, 6).unwrap();
    let mut all = Vec::new();
    for m in base.samples() {
        all.push(m.clone());
        all.push(NodalField(transpose_nodes(n, m)));
    }
    let samples = SampleSet::from_samples(3, all).unwrap();
    let lr = LowRankOptions {
        rank: 2,
        oversampling: 2,
        seed: 1,
    };
    let smoothing = SmoothingParams::new(8.0, 1e3).unwrap();
    let mut e =
        CostGradEngine::new(EngineKind::Saa, &problem, &field, &samples, lr, smoothing).unwrap();
    let z = design(5);
    let a = e.evaluate(&z).unwrap();
    assert!(a.chance > 0.05);
    let b = e.evaluate(&transpose_wells(&z)).unwrap();
    assert!((a.cost - b.cost).abs() <= 1e-10 * a.cost);
    let scale = a.grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (x, y) in transpose_wells(&a.grad).iter().zip(&b.grad) {
        assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y}");
    }
}

fn bowl(center: Vec<f64>, weight: f64) -> impl FnMut(&[f64]) -> chanceopt_core::Result<Evaluation> {
    move |z: &[f64]| {
        let cost = z
            .iter()
            .zip(&center)
            .map(|(a, b)| weight * (a - b) * (a - b))
            .sum();
        let grad = z
            .iter()
            .zip(&center)
            .map(|(a, b)| 2.0 * weight * (a - b))
            .collect();
        Ok(Evaluation {
            cost,
            grad,
            chance: 0.0,
            solves: SolveCounts::default(),
        })
    }
}

#[test]
fn bound_constrained_minimizer_lands_on_the_face() {
    let center: Vec<f64> = (0..6).map(|i| -3.0 + 1.7 * i as f64).collect();
    let bounds = Bounds {
        lower: 0.0,
        upper: 4.0,
    };
    let opts = LbfgsOptions {
        eps_in: 1e-10,
        ..LbfgsOptions::default()
    };
    let mut costs = Vec::new();
    let r = lbfgs_bound(
        &mut bowl(center.clone(), 0.7),
        &[2.0; 6],
        bounds,
        &opts,
        &mut |_, _, e, _| costs.push(e.cost),
    )
    .unwrap();
    assert_eq!(r.status, InnerStatus::Converged);
    for (z, c) in r.z.iter().zip(&center) {
        assert!((z - c.clamp(0.0, 4.0)).abs() <= 1e-8, "{z} vs {c}");
    }
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    assert!(lbfgs_bound(
        &mut bowl(center, 1.0),
        &[5.0; 6],
        bounds,
        &opts,
        &mut |_, _, _, _| {}
    )
    .is_err());
}

#[test]
fn penalty_free_design_is_the_closed_form_optimum() {
    let s = setup(8, 2.56, 4);
    let mut e = engine(
        &s,
        EngineKind::Saa,
        2,
        2,
        SmoothingParams::new(8.0, 0.0).unwrap(),
    );
    let p = s.problem.params().clone();
    let l = p.target.len() as f64;
    let opt: Vec<f64> = p
        .target
        .iter()
        .map(|t| t * (2.0 / l) / (2.0 / l + p.eta_p))
        .collect();
    let bounds = Bounds {
        lower: p.z_min,
        upper: p.z_max,
    };
    let opts = LbfgsOptions {
        eps_in: 1e-9,
        ..LbfgsOptions::default()
    };
    let mut objective = |z: &[f64]| e.evaluate(z);
    let r = lbfgs_bound(
        &mut objective,
        &[0.0; 25],
        bounds,
        &opts,
        &mut |_, _, _, _| {},
    )
    .unwrap();
    for (a, b) in r.z.iter().zip(&opt) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    let again = lbfgs_bound(&mut objective, &opt, bounds, &opts, &mut |_, _, _, _| {}).unwrap();
    assert!(again.iterations <= 1);
}

#[test]
fn schedule_steps() {
    let s = ContinuationSchedule::default();
    let steps: Vec<(f64, f64)> = (1..=4).map(|l| (s.step(l).beta, s.step(l).gamma)).collect();
    assert_eq!(
        steps,
        vec![(8.0, 1e3), (16.0, 1e4), (32.0, 1e5), (64.0, 1e6)]
    );
    let c = ContinuationSchedule {
        growth: GrowthRule::Compounding,
        ..s
    };
    assert_eq!((c.step(3).beta, c.step(3).gamma), (64.0, 1e6));
    assert!(ContinuationSchedule {
        sigma_beta: 1.0,
        ..s
    }
    .validate()
    .is_err());
    assert!(ContinuationSchedule { l_max: 0, ..s }.validate().is_err());
    assert!(SmoothingParams::new(0.0, 1.0).is_err());
    assert!(SmoothingParams::new(1.0, -1.0).is_err());
}

#[test]
fn continuation_reduces_the_chance_and_keeps_counters_monotone() {
    let s = setup(8, 2.56, 64);
    let mut e = engine(
        &s,
        EngineKind::Taylor2,
        5,
        5,
        SmoothingParams::new(8.0, 1e3).unwrap(),
    );
    let schedule = ContinuationSchedule {
        l_max: 2,
        ..ContinuationSchedule::default()
    };
    let z0 = s.problem.params().target.clone();
    let start = e.evaluate(&z0).unwrap().chance;
    let mut seen = 0;
    let out = continuation_solve(&mut e, &schedule, &z0, &mut |step, _| {
        seen += 1;
        assert_eq!(step.step, seen);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, out.steps.len());
    let last = out.steps.last().unwrap();
    assert!(last.chance < start, "{} vs {start}", last.chance);
    assert!(out.z.iter().all(|v| (0.0..=36.0).contains(v)));
    let rows = &out.trace.rows;
    assert!(rows
        .windows(2)
        .all(|w| w[1].solves.state >= w[0].solves.state
            && w[1].solves.linearized >= w[0].solves.linearized));
    assert_eq!(rows[0].inner, 0);
    assert_eq!((rows[0].beta, rows[0].gamma), (8.0, 1e3));
}
