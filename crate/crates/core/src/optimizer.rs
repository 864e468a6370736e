//! Projected L-BFGS on a box and the continuation loop that drives it through
//! increasing smoothing sharpness and penalty weight.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::chance::SmoothingParams;
use crate::darcy::SolveCounts;
use crate::engine::{CostGradEngine, Evaluation};
use crate::error::{check_len, invalid, Error, Result};
use crate::field::{dot, norm_inf};

/// How `(beta, gamma)` grow between outer steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthRule {
    /// `beta_{l+1} = sigma_beta beta_l`.
    Geometric,
    /// `beta_{l+1} = sigma_beta^(l+1) beta_l`, as printed in the algorithm.
    Compounding,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuationSchedule {
    pub beta_0: f64,
    pub gamma_0: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
    pub growth: GrowthRule,
    pub l_max: usize,
    pub eps_out: f64,
    pub k_max: usize,
    pub eps_in: f64,
}

impl Default for ContinuationSchedule {
    /// `(beta, gamma) = (2^(l+2), 10^(l+2))` for `l = 1..4`.
    fn default() -> Self {
        Self {
            beta_0: 8.0,
            gamma_0: 1e3,
            sigma_beta: 2.0,
            sigma_gamma: 10.0,
            growth: GrowthRule::Geometric,
            l_max: 4,
            eps_out: 0.01,
            k_max: 100,
            eps_in: 1e-3,
        }
    }
}

impl ContinuationSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.beta_0) || !positive(self.gamma_0) {
            return Err(invalid("beta_0 and gamma_0 must be positive"));
        }
        if !(self.sigma_beta > 1.0 && self.sigma_beta.is_finite())
            || !(self.sigma_gamma > 1.0 && self.sigma_gamma.is_finite())
        {
            return Err(invalid("growth multipliers must exceed 1"));
        }
        if !positive(self.eps_out) || !positive(self.eps_in) {
            return Err(invalid("tolerances must be positive"));
        }
        if self.l_max == 0 || self.k_max == 0 {
            return Err(invalid("l_max and k_max must be at least 1"));
        }
        Ok(())
    }

    /// `(beta, gamma)` of outer step `l`, counting from 1.
    pub fn step(&self, l: usize) -> SmoothingParams {
        let (mut beta, mut gamma) = (self.beta_0, self.gamma_0);
        for i in 1..l {
            let e = match self.growth {
                GrowthRule::Geometric => 1,
                GrowthRule::Compounding => i as i32,
            };
            beta *= libm::pow(self.sigma_beta, e as f64);
            gamma *= libm::pow(self.sigma_gamma, e as f64);
        }
        SmoothingParams { beta, gamma }
    }
}

/// One accepted inner iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub z: Vec<f64>,
    pub cost: f64,
    pub projected_grad_norm: f64,
    pub chance: f64,
    /// Cumulative solves since the optimizer started.
    pub solves: SolveCounts,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    IterationLimit,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct InnerResult {
    pub z: Vec<f64>,
    pub eval: Evaluation,
    pub iterations: usize,
    pub status: InnerStatus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub k_max: usize,
    pub eps_in: f64,
    /// Sufficient-decrease constant of the backtracking search.
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            k_max: 100,
            eps_in: 1e-3,
            armijo: 1e-4,
            min_step: 1e-14,
        }
    }
}

/// Box `[lower, upper]` shared by all components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    fn project(&self, z: &mut [f64]) {
        for v in z {
            *v = v.clamp(self.lower, self.upper);
        }
    }

    /// `z - P(z - g)`.
    pub fn projected_gradient(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(g)
            .map(|(zi, gi)| zi - (zi - gi).clamp(self.lower, self.upper))
            .collect()
    }
}

/// Projected L-BFGS. `objective` returns cost and gradient; `record` sees
/// every accepted iterate including the start.
pub fn lbfgs_bound(
    objective: &mut dyn FnMut(&[f64]) -> Result<Evaluation>,
    z0: &[f64],
    bounds: Bounds,
    opts: &LbfgsOptions,
    record: &mut dyn FnMut(usize, &[f64], &Evaluation, f64),
) -> Result<InnerResult> {
    if !(bounds.lower <= bounds.upper) {
        return Err(invalid("lower bound exceeds upper bound"));
    }
    if z0.iter().any(|v| *v < bounds.lower || *v > bounds.upper) {
        return Err(invalid("initial design lies outside the bounds"));
    }
    let mut z = z0.to_vec();
    let mut eval = objective(&z)?;
    check_len(z.len(), eval.grad.len())?;
    let mut pg = norm_inf(&bounds.projected_gradient(&z, &eval.grad));
    record(0, &z, &eval, pg);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut status = InnerStatus::IterationLimit;
    let mut iterations = 0;
    while iterations < opts.k_max {
        if pg <= opts.eps_in {
            status = InnerStatus::Converged;
            break;
        }
        let g = &eval.grad;
        let free: Vec<bool> = z
            .iter()
            .zip(g)
            .map(|(zi, gi)| {
                !((*zi <= bounds.lower && *gi > 0.0) || (*zi >= bounds.upper && *gi < 0.0))
            })
            .collect();
        let mut d = two_loop(g, &pairs);
        mask(&mut d, &free);
        if !(dot(&d, g) < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            mask(&mut d, &free);
        }
        let mut t = if pairs.is_empty() {
            1.0f64.min(1.0 / norm_inf(&d).max(f64::MIN_POSITIVE))
        } else {
            1.0
        };
        let accepted = loop {
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            bounds.project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
            let decrease = dot(g, &step);
            if decrease < 0.0 {
                match objective(&trial) {
                    Ok(e) if e.cost <= eval.cost + opts.armijo * decrease => {
                        break Some((trial, step, e));
                    }
                    Ok(_) => {}
                    Err(Error::SolverFailure { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            t *= 0.5;
            if t < opts.min_step {
                break None;
            }
        };
        let Some((trial, s, e)) = accepted else {
            status = InnerStatus::LineSearchFailed;
            break;
        };
        let y: Vec<f64> = e.grad.iter().zip(&eval.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        z = trial;
        eval = e;
        iterations += 1;
        pg = norm_inf(&bounds.projected_gradient(&z, &eval.grad));
        record(iterations, &z, &eval, pg);
    }
    if status == InnerStatus::IterationLimit && pg <= opts.eps_in {
        status = InnerStatus::Converged;
    }
    Ok(InnerResult {
        z,
        eval,
        iterations,
        status,
    })
}

fn mask(d: &mut [f64], free: &[bool]) {
    for (v, f) in d.iter_mut().zip(free) {
        if !f {
            *v = 0.0;
        }
    }
}

/// `-H g` with the limited-memory inverse Hessian.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(&alphas) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Summary of one outer continuation step.
#[derive(Clone, Debug)]
pub struct OuterStep {
    pub step: usize,
    pub smoothing: SmoothingParams,
    pub z: Vec<f64>,
    pub cost: f64,
    /// Engine chance estimate at the step's optimum.
    pub chance: f64,
    pub iterations: usize,
    pub status: InnerStatus,
    /// Error of an inner failure that was recovered by moving on.
    pub failure: Option<Error>,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub z: Vec<f64>,
    pub steps: Vec<OuterStep>,
    pub trace: OptTrace,
}

/// Runs the outer loop until `|chance - alpha| < eps_out` after a step or the
/// step budget `l_max` is spent. Each inner solve starts from the previous
/// optimum. `after_step` is called once per outer step.
pub fn continuation_solve(
    engine: &mut CostGradEngine<'_>,
    schedule: &ContinuationSchedule,
    z0: &[f64],
    after_step: &mut dyn FnMut(&OuterStep, &CostGradEngine<'_>) -> Result<()>,
) -> Result<ContinuationResult> {
    schedule.validate()?;
    let params = engine.problem().params().clone();
    let bounds = Bounds {
        lower: params.z_min,
        upper: params.z_max,
    };
    let start = engine.problem().counter().counts();
    let opts = LbfgsOptions {
        k_max: schedule.k_max,
        eps_in: schedule.eps_in,
        ..LbfgsOptions::default()
    };
    let mut z = z0.to_vec();
    let mut trace = OptTrace::default();
    let mut steps = Vec::new();
    for l in 1..=schedule.l_max {
        let smoothing = schedule.step(l);
        engine.set_smoothing(smoothing);
        let problem = engine.problem();
        let inner = {
            let mut record = |k: usize, zk: &[f64], e: &Evaluation, pg: f64| {
                let solves = problem.counter().counts().since(start);
                trace.rows.push(TraceRow {
                    outer: l,
                    inner: k,
                    z: zk.to_vec(),
                    cost: e.cost,
                    projected_grad_norm: pg,
                    chance: e.chance,
                    solves,
                    beta: smoothing.beta,
                    gamma: smoothing.gamma,
                });
            };
            let mut objective = |zk: &[f64]| engine.evaluate(zk);
            lbfgs_bound(&mut objective, &z, bounds, &opts, &mut record)
        };
        let step = match inner {
            Ok(r) => {
                z = r.z;
                OuterStep {
                    step: l,
                    smoothing,
                    z: z.clone(),
                    cost: r.eval.cost,
                    chance: r.eval.chance,
                    iterations: r.iterations,
                    status: r.status,
                    failure: None,
                }
            }
            Err(e) => {
                let eval = engine.evaluate(&z)?;
                OuterStep {
                    step: l,
                    smoothing,
                    z: z.clone(),
                    cost: eval.cost,
                    chance: eval.chance,
                    iterations: 0,
                    status: InnerStatus::LineSearchFailed,
                    failure: Some(e),
                }
            }
        };
        after_step(&step, engine)?;
        let done = (step.chance - params.alpha).abs() < schedule.eps_out;
        steps.push(step);
        if done {
            break;
        }
    }
    Ok(ContinuationResult { z, steps, trace })
}
