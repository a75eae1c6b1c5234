//! Tracking cost, box constraints, adjoint gradient and projected-gradient descent.
//!
//! Time integrals over `(0, T)` use the right-endpoint rule
//! `∫ f ≈ Σ_{k=1}^{M} τ f_k`, which is exact for the piecewise-constant
//! controls the stepper consumes. The same rule defines the control inner
//! product, so the gradient below is the Riesz representative of `dJ`.

use crate::error::{KwcError, Result};
use crate::field::{weighted_dot, Bc, Field, Grid2D};
use crate::model::ModelParams;
use crate::sensitivity::{coefficients_from_state, solve_adjoint, AdjointTrajectory};
use crate::state::{solve_state, ControlPair, SolverOptions, StateTrajectory, TimeGrid};
use serde::{Deserialize, Serialize};

/// One obstacle: a scalar (possibly `±∞`) or a field per time level.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    Scalar(f64),
    Fields(Vec<Field>),
}

impl Obstacle {
    #[inline]
    fn at(&self, k: usize, i: usize) -> f64 {
        match self {
            Obstacle::Scalar(s) => *s,
            Obstacle::Fields(f) => f[k].values()[i],
        }
    }

    fn truncated(&self, n: f64) -> Self {
        let t = |x: f64| x.clamp(-n, n);
        match self {
            Obstacle::Scalar(s) => Obstacle::Scalar(t(*s)),
            Obstacle::Fields(f) => Obstacle::Fields(f.iter().map(|x| x.map(t)).collect()),
        }
    }
}

/// `K = {u : κ⁰ ≤ u ≤ κ¹}` pointwise in space and time.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraint {
    pub kappa0: Obstacle,
    pub kappa1: Obstacle,
}

impl BoxConstraint {
    pub fn unbounded() -> Self {
        Self {
            kappa0: Obstacle::Scalar(f64::NEG_INFINITY),
            kappa1: Obstacle::Scalar(f64::INFINITY),
        }
    }

    pub fn scalar(lower: f64, upper: f64) -> Result<Self> {
        let k = Self {
            kappa0: Obstacle::Scalar(lower),
            kappa1: Obstacle::Scalar(upper),
        };
        k.validate(None)?;
        Ok(k)
    }

    pub fn fields(lower: Vec<Field>, upper: Vec<Field>) -> Result<Self> {
        let k = Self {
            kappa0: Obstacle::Fields(lower),
            kappa1: Obstacle::Fields(upper),
        };
        k.validate(None)?;
        Ok(k)
    }

    /// Checks `κ⁰ ≤ κ¹` and, when `shape = (grid, levels)` is given, the sizes.
    pub fn validate(&self, shape: Option<(&Grid2D, usize)>) -> Result<()> {
        let levels = |o: &Obstacle| match o {
            Obstacle::Scalar(_) => None,
            Obstacle::Fields(f) => Some(f.len()),
        };
        for o in [&self.kappa0, &self.kappa1] {
            match o {
                Obstacle::Scalar(s) if s.is_nan() => {
                    return Err(KwcError::InfeasibleConstraint("NaN obstacle".into()))
                }
                Obstacle::Fields(f) => {
                    if f.is_empty() {
                        return Err(KwcError::InfeasibleConstraint("empty obstacle field list".into()));
                    }
                    for x in f {
                        f[0].grid().check_same(x.grid())?;
                    }
                    if let Some((g, n)) = shape {
                        g.check_same(f[0].grid())?;
                        if f.len() != n {
                            return Err(KwcError::GridMismatch(format!(
                                "obstacle has {} levels, expected {n}",
                                f.len()
                            )));
                        }
                    }
                }
                _ => {}
            }
        }
        if let (Some(a), Some(b)) = (levels(&self.kappa0), levels(&self.kappa1)) {
            if a != b {
                return Err(KwcError::GridMismatch("obstacles differ in level count".into()));
            }
        }
        let (nl, nn) = match (&self.kappa0, &self.kappa1) {
            (Obstacle::Fields(f), _) | (_, Obstacle::Fields(f)) => (f.len(), f[0].grid().n_nodes()),
            _ => (1, 1),
        };
        for k in 0..nl {
            for i in 0..nn {
                let (lo, hi) = (self.kappa0.at(k, i), self.kappa1.at(k, i));
                if !(lo <= hi) || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                    return Err(KwcError::InfeasibleConstraint(format!(
                        "kappa0 = {lo} > kappa1 = {hi} at level {k}, node {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `K_n`: both obstacles clamped to `[−n, n]`.
    pub fn truncated(&self, n: f64) -> Self {
        Self {
            kappa0: self.kappa0.truncated(n),
            kappa1: self.kappa1.truncated(n),
        }
    }

    pub fn contains(&self, u: &[Field]) -> bool {
        u.iter().enumerate().all(|(k, f)| {
            f.values()
                .iter()
                .enumerate()
                .all(|(i, &x)| x >= self.kappa0.at(k, i) && x <= self.kappa1.at(k, i))
        })
    }
}

/// `κ⁰ ∨ (κ¹ ∧ u)` at every node and level.
pub fn project(u: &[Field], k: &BoxConstraint) -> Result<Vec<Field>> {
    if let Some(f) = u.first() {
        k.validate(Some((f.grid(), u.len())))?;
    }
    Ok(u.iter()
        .enumerate()
        .map(|(l, f)| {
            let v = f
                .values()
                .iter()
                .enumerate()
                .map(|(i, &x)| k.kappa0.at(l, i).max(k.kappa1.at(l, i).min(x)))
                .collect();
            Field::from_raw(*f.grid(), f.bc(), v)
        })
        .collect())
}

/// Desired state `[η_ad, θ_ad]` per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProfile {
    pub eta_ad: Vec<Field>,
    pub theta_ad: Vec<Field>,
}

impl TargetProfile {
    pub fn constant_in_time(eta: Field, theta: Field, steps: usize) -> Self {
        Self {
            eta_ad: vec![eta; steps + 1],
            theta_ad: vec![theta; steps + 1],
        }
    }

    pub fn from_trajectory(t: &StateTrajectory) -> Self {
        Self {
            eta_ad: t.eta.clone(),
            theta_ad: t.theta.clone(),
        }
    }

    fn validate(&self, grid: &Grid2D, levels: usize) -> Result<()> {
        if self.eta_ad.len() != levels || self.theta_ad.len() != levels {
            return Err(KwcError::GridMismatch(format!(
                "target has {}/{} levels, expected {levels}",
                self.eta_ad.len(),
                self.theta_ad.len()
            )));
        }
        for f in self.eta_ad.iter().chain(&self.theta_ad) {
            grid.check_same(f.grid())?;
            if !f.is_finite() {
                return Err(KwcError::InvalidField("non-finite target".into()));
            }
        }
        Ok(())
    }
}

fn sq(f: &Field) -> f64 {
    weighted_dot(f.grid(), f.values(), f.values())
}

fn diff_sq(a: &Field, b: &Field) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    weighted_dot(a.grid(), &d, &d)
}

/// `Σ_{k=1}^{M} τ ⟨a_k, b_k⟩_H`, the inner product on time-sampled fields.
pub fn inner_time(tau: f64, a: &[Field], b: &[Field]) -> f64 {
    (1..a.len())
        .map(|k| tau * weighted_dot(a[k].grid(), a[k].values(), b[k].values()))
        .sum()
}

pub fn norm_time(tau: f64, a: &[Field]) -> f64 {
    inner_time(tau, a, a).sqrt()
}

/// Tracking plus control cost.
pub fn cost(
    traj: &StateTrajectory,
    ctrl: &ControlPair,
    target: &TargetProfile,
    params: &ModelParams,
) -> Result<f64> {
    let grid = traj.grid();
    let levels = traj.times.len();
    target.validate(grid, levels)?;
    ctrl.validate(grid, levels - 1)?;
    let tau = traj.tau();
    let mut j = 0.0;
    for k in 1..levels {
        j += 0.5 * tau
            * (params.m_eta * diff_sq(&traj.eta[k], &target.eta_ad[k])
                + params.m_theta * diff_sq(&traj.theta[k], &target.theta_ad[k])
                + params.m_u * sq(&ctrl.u[k])
                + params.m_v * sq(&ctrl.v[k]));
    }
    Ok(j)
}

/// Adjoint right-hand side `[M_η(η − η_ad), M_θ(θ − θ_ad)]`.
pub fn adjoint_rhs(
    traj: &StateTrajectory,
    target: &TargetProfile,
    params: &ModelParams,
) -> Result<(Vec<Field>, Vec<Field>)> {
    target.validate(traj.grid(), traj.times.len())?;
    let rp = traj
        .eta
        .iter()
        .zip(&target.eta_ad)
        .map(|(e, d)| e.sub(d).map(|f| f.scaled(params.m_eta)))
        .collect::<Result<Vec<_>>>()?;
    let rz = traj
        .theta
        .iter()
        .zip(&target.theta_ad)
        .map(|(e, d)| e.zip_map(d, |a, b| params.m_theta * (a - b)))
        .collect::<Result<Vec<_>>>()?;
    Ok((rp, rz))
}

/// Adjoint state of the tracking cost along `traj`.
pub fn adjoint_of(
    traj: &StateTrajectory,
    target: &TargetProfile,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<AdjointTrajectory> {
    let coeffs = coefficients_from_state(traj, params)?;
    let (rp, rz) = adjoint_rhs(traj, target, params)?;
    solve_adjoint(&coeffs, &rp, &rz, opts.cg)
}

fn check_adjoint(ctrl: &ControlPair, adj: &AdjointTrajectory) -> Result<()> {
    if adj.p.len() != ctrl.len() || adj.z.len() != ctrl.len() {
        return Err(KwcError::GridMismatch(format!(
            "adjoint has {} levels, control {}",
            adj.p.len(),
            ctrl.len()
        )));
    }
    Ok(())
}

/// `[M_u(u + p), M_v(v + z)]`; the sample at index `k + 1` pairs with adjoint level `k`.
/// Index 0 carries no information and gets a zero gradient.
pub fn gradient(ctrl: &ControlPair, adj: &AdjointTrajectory, params: &ModelParams) -> Result<ControlPair> {
    check_adjoint(ctrl, adj)?;
    let grid = *ctrl.u[0].grid();
    let m = ctrl.len() - 1;
    let mut gu = vec![Field::zeros(grid, Bc::Neumann)];
    let mut gv = vec![Field::zeros(grid, Bc::Neumann)];
    for k in 1..=m {
        gu.push(ctrl.u[k].zip_map(&adj.p[k - 1], |u, p| params.m_u * (u + p))?);
        gv.push(ctrl.v[k].zip_map(&adj.z[k - 1], |v, z| params.m_v * (v + z))?);
    }
    Ok(ControlPair { u: gu, v: gv })
}

/// `(‖M_u(u − proj_K(−p))‖, ‖M_v(v + z)‖)` in the time-sampled norm.
pub fn optimality_residual(
    ctrl: &ControlPair,
    adj: &AdjointTrajectory,
    k: &BoxConstraint,
    params: &ModelParams,
    tau: f64,
) -> Result<(f64, f64)> {
    check_adjoint(ctrl, adj)?;
    let m = ctrl.len() - 1;
    let mut neg_p: Vec<Field> = vec![adj.p[0].scaled(0.0)];
    neg_p.extend((0..m).map(|l| adj.p[l].scaled(-1.0)));
    let clamp = project(&neg_p, k)?;
    let ru: Vec<Field> = (0..=m)
        .map(|l| ctrl.u[l].zip_map(&clamp[l], |u, c| params.m_u * (u - c)))
        .collect::<Result<_>>()?;
    let mut rv = vec![ctrl.v[0].scaled(0.0)];
    for l in 1..=m {
        rv.push(ctrl.v[l].zip_map(&adj.z[l - 1], |v, z| params.m_v * (v + z))?);
    }
    Ok((norm_time(tau, &ru), norm_time(tau, &rv)))
}

/// Everything that fixes the reduced cost `J(u, v)`.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub eta0: Field,
    pub theta0: Field,
    pub target: TargetProfile,
    pub constraint: BoxConstraint,
    pub params: ModelParams,
    pub time: TimeGrid,
    pub solver: SolverOptions,
}

/// Cost, gradient and the trajectories they came from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub state: StateTrajectory,
    pub adjoint: AdjointTrajectory,
    pub gradient: ControlPair,
    pub residual: (f64, f64),
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        self.params.require_positive_eps()?;
        let g = self.eta0.grid();
        self.target.validate(g, self.time.steps + 1)?;
        self.constraint.validate(Some((g, self.time.steps + 1)))
    }

    pub fn state(&self, ctrl: &ControlPair) -> Result<StateTrajectory> {
        solve_state((&self.eta0, &self.theta0), ctrl, &self.params, self.time, &self.solver)
    }

    pub fn cost(&self, ctrl: &ControlPair) -> Result<f64> {
        cost(&self.state(ctrl)?, ctrl, &self.target, &self.params)
    }

    pub fn evaluate(&self, ctrl: &ControlPair) -> Result<Evaluation> {
        let state = self.state(ctrl)?;
        let j = cost(&state, ctrl, &self.target, &self.params)?;
        let adjoint = adjoint_of(&state, &self.target, &self.params, &self.solver)?;
        let gradient = gradient(ctrl, &adjoint, &self.params)?;
        let mut residual = optimality_residual(ctrl, &adjoint, &self.constraint, &self.params, self.time.tau())?;
        if self.params.m_u == 0.0 {
            residual.0 = 0.0;
        }
        Ok(Evaluation {
            cost: j,
            state,
            adjoint,
            gradient,
            residual,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Stop once `max(r_u, r_v) ≤ tol`.
    pub tol: f64,
    /// Or once `max(r_u, r_v) ≤ rtol · initial residual`.
    pub rtol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            rtol: 1e-5,
            max_iter: 200,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            max_halvings: 40,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol >= 0.0
            && self.rtol >= 0.0
            && self.armijo_c1 > 0.0
            && self.armijo_c1 < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.initial_step > 0.0
            && self.initial_step.is_finite();
        if ok {
            Ok(())
        } else {
            Err(KwcError::UnsupportedParameter(format!("optimizer options {self:?}")))
        }
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// An accepted step did not lower the cost: the iterates sit at the
    /// rounding floor of the discrete cost.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub cost_history: Vec<f64>,
    pub residual_history: Vec<(f64, f64)>,
    /// Accepted step per iterate; the first entry (initial point) is 0.
    pub step_history: Vec<f64>,
    pub control: ControlPair,
    pub state: StateTrajectory,
    pub adjoint: AdjointTrajectory,
}

impl OptimizationReport {
    pub fn final_residual(&self) -> (f64, f64) {
        *self.residual_history.last().expect("report has at least one entry")
    }

    pub fn initial_residual(&self) -> (f64, f64) {
        self.residual_history[0]
    }
}

fn candidate(
    ctrl: &ControlPair,
    grad: &ControlPair,
    s: f64,
    problem: &ControlProblem,
) -> Result<ControlPair> {
    let mut next = ctrl.axpy(-s, grad)?;
    if problem.params.m_u == 0.0 {
        next.u = ctrl.u.clone();
    } else {
        next.u = project(&next.u, &problem.constraint)?;
    }
    Ok(next)
}

/// Projected gradient with Armijo backtracking, from `initial` (or zero).
pub fn optimize(
    problem: &ControlProblem,
    initial: Option<ControlPair>,
    opts: &OptimizerOptions,
) -> Result<OptimizationReport> {
    problem.validate()?;
    opts.validate()?;
    let grid = *problem.eta0.grid();
    let m = problem.time.steps;
    let tau = problem.time.tau();
    let mut ctrl = initial.unwrap_or_else(|| ControlPair::zeros(grid, m));
    ctrl.validate(&grid, m)?;
    if problem.params.m_u != 0.0 {
        ctrl.u = project(&ctrl.u, &problem.constraint)?;
    }
    let mut ev = problem.evaluate(&ctrl)?;
    let r0 = ev.residual.0.max(ev.residual.1);
    let mut report = OptimizationReport {
        iterations: 0,
        converged: false,
        termination: Termination::MaxIterations,
        cost_history: vec![ev.cost],
        residual_history: vec![ev.residual],
        step_history: vec![0.0],
        control: ctrl.clone(),
        state: ev.state.clone(),
        adjoint: ev.adjoint.clone(),
    };
    let done = |r: (f64, f64)| {
        let r = r.0.max(r.1);
        r <= opts.tol || r <= opts.rtol * r0
    };
    for it in 0..opts.max_iter {
        if done(ev.residual) {
            report.converged = true;
            report.termination = Termination::Converged;
            break;
        }
        let mut s = opts.initial_step;
        let mut halvings = 0;
        let (next, next_ev) = loop {
            let cand = candidate(&ctrl, &ev.gradient, s, problem)?;
            let du: Vec<Field> = cand.u.iter().zip(&ctrl.u).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
            let dv: Vec<Field> = cand.v.iter().zip(&ctrl.v).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
            let slope = inner_time(tau, &ev.gradient.u, &du) + inner_time(tau, &ev.gradient.v, &dv);
            // A failed trial solve counts as a rejected step.
            if let Ok(trial) = problem.evaluate(&cand) {
                if trial.cost <= ev.cost + opts.armijo_c1 * slope {
                    break (cand, trial);
                }
            }
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(KwcError::LineSearch {
                    iterate: it,
                    halvings: opts.max_halvings,
                    cost: ev.cost,
                    slope,
                });
            }
            s *= opts.backtrack;
        };
        if next_ev.cost >= ev.cost {
            report.termination = Termination::Stalled;
            break;
        }
        ctrl = next;
        ev = next_ev;
        report.iterations = it + 1;
        report.cost_history.push(ev.cost);
        report.residual_history.push(ev.residual);
        report.step_history.push(s);
    }
    if report.termination == Termination::MaxIterations && done(ev.residual) {
        report.converged = true;
        report.termination = Termination::Converged;
    }
    report.control = ctrl;
    report.state = ev.state;
    report.adjoint = ev.adjoint;
    Ok(report)
}
