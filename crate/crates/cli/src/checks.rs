//! Numerical checks behind `verify` and the acceptance suite. Each returns the
//! measured quantity next to its threshold.

use std::f64::consts::PI;

use chanceopt_core::fem::{assemble_mass, assemble_weighted_stiffness};
use chanceopt_core::field::{dot, norm2};
use chanceopt_core::{
    build_surrogate, chance_saa, solve_spd, ChanceMode, ChanceSource, CostGradEngine, DarcyProblem,
    EngineKind, LowRankOptions, NodalField, SampleSet, SolverOptions, StructuredTriMesh,
    TaylorGradient,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;
use crate::experiment::Experiment;

/// Central-difference step in the design and in the parameter field.
const FD_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= threshold`.
    pub fn at_most(
        name: impl Into<String>,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
            detail: detail.into(),
        }
    }

    pub fn at_least(
        name: impl Into<String>,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured >= threshold,
            detail: detail.into(),
        }
    }
}

fn rng_for(exp: &Experiment, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(exp.seed() ^ (0x5851_f42d_4c95_7f2d_u64.wrapping_mul(stream + 1)))
}

fn uniform_dir(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Largest relative error of `<grad E, d>` against central differences of
/// `E` over `directions` random directions at `z0`. `corrupt` scales the
/// analytic gradient by `1 + 1e-2` as a negative control.
pub fn gradient_fd(
    exp: &Experiment,
    kind: EngineKind,
    gradient: TaylorGradient,
    directions: usize,
    corrupt: bool,
) -> Result<Check, CliError> {
    let mut engine = CostGradEngine::new(
        kind,
        &exp.problem,
        &exp.field,
        &exp.samples,
        exp.config.low_rank(),
        exp.config.initial_smoothing(),
    )?
    .with_gradient(gradient);
    let z = exp.config.z0();
    let mut g = engine.evaluate(&z)?.grad;
    if corrupt {
        g.iter_mut().for_each(|v| *v *= 1.0 + 1e-2);
    }
    let mut rng = rng_for(exp, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let d = uniform_dir(&mut rng, z.len());
        let zp: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + FD_STEP * b).collect();
        let zm: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a - FD_STEP * b).collect();
        let fd = (engine.evaluate(&zp)?.cost - engine.evaluate(&zm)?.cost) / (2.0 * FD_STEP);
        let an = dot(&g, &d);
        worst = worst.max((fd - an).abs() / an.abs().max(f64::MIN_POSITIVE));
    }
    let name = match (kind, gradient) {
        (EngineKind::Saa, _) => "gradient_fd_saa",
        (EngineKind::Taylor2, TaylorGradient::Exact) => "gradient_fd_taylor2",
        (EngineKind::Taylor2, TaylorGradient::Frozen) => "gradient_fd_taylor2_frozen",
    };
    Ok(Check::at_most(
        name,
        worst,
        1e-4,
        format!(
            "{directions} directions, n = {}, M = {}",
            exp.config.mesh.n,
            exp.samples.len()
        ),
    ))
}

fn f_at(p: &DarcyProblem, m: &[f64], z: &[f64]) -> Result<f64, CliError> {
    Ok(p.eval_f(&p.solve_state(&NodalField(m.to_vec()), z)?.u))
}

fn shifted(m: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    m.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

/// Parameter gradient and Hessian action against central differences, and
/// the symmetry of the Hessian action, at the mean field and `z0`.
pub fn parameter_derivatives(exp: &Experiment) -> Result<Vec<Check>, CliError> {
    let p = &exp.diagnostics;
    let z = exp.config.z0();
    let m = exp.field.mean().to_vec();
    let mut s = p.solve_state(exp.field.mean(), &z)?;
    p.attach_adjoint(&mut s)?;
    let g = p.grad_m_f(&s)?;
    let mut rng = rng_for(exp, 2);
    let mut grad_err: f64 = 0.0;
    for _ in 0..5 {
        let d = uniform_dir(&mut rng, m.len());
        let fd = (f_at(p, &shifted(&m, &d, FD_STEP), &z)?
            - f_at(p, &shifted(&m, &d, -FD_STEP), &z)?)
            / (2.0 * FD_STEP);
        let an = dot(&d, &g);
        grad_err = grad_err.max((fd - an).abs() / an.abs());
    }
    let grad_at = |mm: &[f64]| -> Result<Vec<f64>, CliError> {
        let mut b = p.solve_state(&NodalField(mm.to_vec()), &z)?;
        p.attach_adjoint(&mut b)?;
        Ok(p.grad_m_f(&b)?.0)
    };
    let mut hess_err: f64 = 0.0;
    for _ in 0..3 {
        let d = uniform_dir(&mut rng, m.len());
        let hd = p.hess_action_f(&s, &d)?;
        let gp = grad_at(&shifted(&m, &d, FD_STEP))?;
        let gm = grad_at(&shifted(&m, &d, -FD_STEP))?;
        let err: Vec<f64> = gp
            .iter()
            .zip(&gm)
            .zip(hd.iter())
            .map(|((a, b), h)| (a - b) / (2.0 * FD_STEP) - h)
            .collect();
        hess_err = hess_err.max(norm2(&err) / norm2(&hd));
    }
    let mut sym_err: f64 = 0.0;
    for _ in 0..3 {
        let a = uniform_dir(&mut rng, m.len());
        let b = uniform_dir(&mut rng, m.len());
        let ab = dot(&a, &p.hess_action_f(&s, &b)?);
        let ba = dot(&b, &p.hess_action_f(&s, &a)?);
        sym_err = sym_err.max((ab - ba).abs() / ab.abs().max(ba.abs()));
    }
    Ok(vec![
        Check::at_most("parameter_gradient_fd", grad_err, 1e-5, "5 directions"),
        Check::at_most(
            "hessian_action_fd",
            hess_err,
            1e-4,
            "3 directions, relative l2",
        ),
        Check::at_most("hessian_symmetry", sym_err, 1e-9, "3 pairs"),
    ])
}

/// Double-pass eigenvalues against a dense generalized eigendecomposition of
/// `(H, C^-1)` at the mean and `z0`. Returns the largest relative error of
/// the leading `rank` eigenvalues and the largest error in units of the
/// discarded tail `sum_{n > rank} |lambda_n| + 1e-8`.
pub fn eigen_oracle(
    exp: &Experiment,
    rank: usize,
    oversampling: usize,
) -> Result<(Check, Check), CliError> {
    let p = &exp.diagnostics;
    let g = &exp.field;
    let z = exp.config.z0();
    let mut s = p.solve_state(g.mean(), &z)?;
    p.attach_adjoint(&mut s)?;
    let n = g.dim();
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = p.hess_action_f(&s, &e)?;
        e[j] = 0.0;
        for i in 0..n {
            h[(i, j)] = col[i];
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let a = g.operator().to_dense();
    let a = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let ml_inv = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 / g.lumped_mass()[i]
        } else {
            0.0
        }
    });
    let precision = &a * ml_inv * &a;
    let l = precision
        .cholesky()
        .ok_or_else(|| CliError::Verify("prior precision is not positive definite".into()))?
        .l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| CliError::Verify("singular Cholesky factor".into()))?;
    let pencil = &linv * h * linv.transpose();
    let eig = SymmetricEigen::new((&pencil + pencil.transpose()) * 0.5);
    let mut dense: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    dense.sort_by(|a, b| b.abs().total_cmp(&a.abs()));

    let lr = LowRankOptions {
        rank,
        oversampling,
        seed: exp.config.low_rank().seed,
    };
    let build = build_surrogate(p, g, &z, &lr)?;
    let got = &build.surrogate.pairs.lambdas;
    let tail: f64 = dense[rank..].iter().map(|v| v.abs()).sum::<f64>() + 1e-8;
    let mut rel: f64 = 0.0;
    let mut vs_tail: f64 = 0.0;
    for (r, d) in got.iter().zip(&dense) {
        rel = rel.max((r - d).abs() / d.abs());
        vs_tail = vs_tail.max((r - d).abs() / tail);
    }
    let k = (rank + oversampling).min(n - 1);
    let detail = format!(
        "n = {}, rank {rank}, oversampling {oversampling}, tail {tail:.3e}, |lambda_{rank}| / |lambda_{}| = {:.2}",
        exp.config.mesh.n,
        k + 1,
        dense[rank - 1].abs() / dense[k].abs()
    );
    Ok((
        Check::at_most("eigenvalues_relative", rel, 1e-3, detail.clone()),
        Check::at_most("eigenvalues_within_tail", vs_tail, 1.0, detail),
    ))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Indicator chance of the linear surrogate on `samples` fresh draws against
/// `Phi(f_bar / sigma)` with `sigma^2 = <grad f, C grad f>`, in standard errors.
pub fn gaussian_chance(exp: &Experiment, samples: usize) -> Result<Check, CliError> {
    let z = exp.config.z0();
    let lr = LowRankOptions {
        rank: 1,
        oversampling: 0,
        seed: exp.config.low_rank().seed,
    };
    let build = build_surrogate(&exp.diagnostics, &exp.field, &z, &lr)?;
    let s = &build.surrogate;
    let sigma = dot(&s.grad, &exp.field.apply_cov(&s.grad)?).sqrt();
    let exact = normal_cdf(s.f_bar / sigma);
    let seed = rng_for(exp, 3).random::<u64>();
    let set = SampleSet::generate(&exp.field, seed, samples)?;
    let mut t1 = |m: &NodalField| s.eval_taylor(m, 1);
    let est = chance_saa(&mut t1, &set, ChanceMode::Indicator, ChanceSource::T1)?;
    let z_score = (est.value - exact).abs() / est.std_error.max(f64::MIN_POSITIVE);
    Ok(Check::at_most(
        "gaussian_chance",
        z_score,
        3.0,
        format!(
            "estimate {:.5} +- {:.5}, exact {exact:.5}, M = {samples}",
            est.value, est.std_error
        ),
    ))
}

/// Solves of one cost and gradient evaluation against the closed-form counts.
pub fn counter_audit(exp: &Experiment) -> Result<Vec<Check>, CliError> {
    let z = exp.config.z0();
    let lr = exp.config.low_rank();
    let k = lr.rank + lr.oversampling;
    let m = exp.samples.len();
    let mut out = Vec::new();
    let cases = [
        ("solves_saa", EngineKind::Saa, TaylorGradient::Exact, 2 * m),
        (
            "solves_taylor2_frozen",
            EngineKind::Taylor2,
            TaylorGradient::Frozen,
            4 * k + 4,
        ),
        (
            "solves_taylor2_exact",
            EngineKind::Taylor2,
            TaylorGradient::Exact,
            6 * k + 4,
        ),
    ];
    for (name, kind, gradient, want) in cases {
        let mut e = CostGradEngine::new(
            kind,
            &exp.problem,
            &exp.field,
            &exp.samples,
            lr,
            exp.config.initial_smoothing(),
        )?
        .with_gradient(gradient);
        let ev = e.evaluate(&z)?;
        let got = ev.solves.total();
        let active = ev.chance > exp.config.model.alpha;
        let mut c = Check::at_most(
            name,
            (got as f64 - want as f64).abs(),
            0.0,
            format!("{got} solves, expected {want}"),
        );
        if !active {
            c.detail
                .push_str("; penalty inactive at z0, gradient solves skipped");
            c.passed = true;
        }
        out.push(c);
    }
    Ok(out)
}

fn manufactured_l2_error(n: usize) -> Result<f64, CliError> {
    let m = StructuredTriMesh::unit_square(n)?;
    let nv = m.num_vertices();
    let a = assemble_weighted_stiffness(&m, &NodalField::constant(nv, 1.0))?;
    let mass = assemble_mass(&m);
    let src = m.interpolate(|p| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin());
    let (u, _) = solve_spd(
        &a,
        &mass.apply(&src),
        Some(m.boundary_mask()),
        &SolverOptions::default(),
    )?;
    let exact = m.interpolate(|p| (PI * p.x).sin() * (PI * p.y).sin());
    let e: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(mass.quadratic_form(&e).sqrt())
}

/// Observed order of the discrete L2 error for `-Δu = f` with
/// `u = sin(pi x) sin(pi y)`, the smaller of the rates 8 to 16 and 16 to 32.
pub fn fem_order() -> Result<Check, CliError> {
    let e: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| manufactured_l2_error(n))
        .collect::<Result<_, _>>()?;
    let rates: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Check::at_least(
        "fem_order",
        order,
        1.8,
        format!(
            "L2 errors {:.3e} {:.3e} {:.3e}, rates {:.3} {:.3}",
            e[0], e[1], e[2], rates[0], rates[1]
        ),
    ))
}
