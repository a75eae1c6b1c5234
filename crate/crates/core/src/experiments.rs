//! Continuation studies: shrinking ε, truncated obstacles, and the ε → 0
//! diagnostics of the orientation flux `∇f_ε(∇θ)`.

use crate::control::{norm_time, project, BoxConstraint};
use crate::error::{KwcError, Result};
use crate::field::{cell_gradients, norm_h, Field};
use crate::model::{sgn_membership, ModelParams, Regularizer};
use crate::state::{solve_state, ControlPair, SolverOptions, StateTrajectory, TimeGrid};
use rayon::prelude::*;

/// A family of state solves that differ only in ε.
#[derive(Debug, Clone)]
pub struct ContinuationSpec {
    /// Row labels, one per entry of `eps_sequence`.
    pub labels: Vec<usize>,
    pub eps_sequence: Vec<f64>,
    /// Reference ε; `0` selects the smallest member as a surrogate limit.
    pub eps_ref: f64,
    pub eta0: Field,
    pub theta0: Field,
    pub control: ControlPair,
    pub params: ModelParams,
    pub time: TimeGrid,
    pub solver: SolverOptions,
}

impl ContinuationSpec {
    /// `ε_n = ε + 1/n` for each `n`.
    #[allow(clippy::too_many_arguments)]
    pub fn harmonic(
        eps_ref: f64,
        ns: &[usize],
        eta0: Field,
        theta0: Field,
        control: ControlPair,
        params: ModelParams,
        time: TimeGrid,
        solver: SolverOptions,
    ) -> Result<Self> {
        if ns.contains(&0) {
            return Err(KwcError::UnsupportedParameter("continuation index n must be >= 1".into()));
        }
        let s = Self {
            labels: ns.to_vec(),
            eps_sequence: ns.iter().map(|&n| eps_ref + 1.0 / n as f64).collect(),
            eps_ref,
            eta0,
            theta0,
            control,
            params,
            time,
            solver,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.eps_sequence;
        if e.is_empty() || e.len() != self.labels.len() {
            return Err(KwcError::UnsupportedParameter("empty or unlabeled eps sequence".into()));
        }
        if e.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(KwcError::UnsupportedParameter("eps sequence must be finite and > 0".into()));
        }
        if e.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(KwcError::UnsupportedParameter("eps sequence must be strictly decreasing".into()));
        }
        if !(self.eps_ref.is_finite() && self.eps_ref >= 0.0) {
            return Err(KwcError::UnsupportedParameter("reference eps must be >= 0".into()));
        }
        Ok(())
    }

    fn solve(&self, eps: f64) -> Result<StateTrajectory> {
        let p = self.params.with_eps(eps)?;
        solve_state((&self.eta0, &self.theta0), &self.control, &p, self.time, &self.solver)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub eps: f64,
    /// `max_k |η_n,k − η_ref,k|_H`.
    pub dist_eta: f64,
    pub dist_theta: f64,
    /// `max_k (|η_n,k − η_ref,k|_H² + |θ_n,k − θ_ref,k|_H²)^½`.
    pub dist_state: f64,
    /// `max_k |E_n,k − E_ref,k|`.
    pub energy_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub eps_ref: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub const HEADER: [&'static str; 6] = ["n", "eps", "dist_eta", "dist_theta", "dist_state", "energy_gap"];

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| vec![r.n as f64, r.eps, r.dist_eta, r.dist_theta, r.dist_state, r.energy_gap])
            .collect()
    }
}

fn distances(a: &[Field], b: &[Field]) -> Result<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.sub(y).map(|d| norm_h(&d))).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, d| m.max(*d))
}

/// Solves every member (in parallel) and tabulates distances to the reference.
/// Returns the member trajectories alongside, in sequence order.
pub fn run_eps_continuation(spec: &ContinuationSpec) -> Result<(ConvergenceTable, Vec<StateTrajectory>)> {
    spec.validate()?;
    let eps_ref = if spec.eps_ref > 0.0 {
        spec.eps_ref
    } else {
        *spec.eps_sequence.last().expect("validated non-empty")
    };
    let mut all: Vec<f64> = spec.eps_sequence.clone();
    all.push(eps_ref);
    let mut trajs = all
        .par_iter()
        .map(|&e| spec.solve(e))
        .collect::<Result<Vec<_>>>()?;
    let reference = trajs.pop().expect("reference solve present");
    let rows = spec
        .labels
        .iter()
        .zip(&spec.eps_sequence)
        .zip(&trajs)
        .map(|((&n, &eps), t)| {
            let energy_gap = t
                .energy
                .iter()
                .zip(&reference.energy)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let de = distances(&t.eta, &reference.eta)?;
            let dt = distances(&t.theta, &reference.theta)?;
            let ds: Vec<f64> = de.iter().zip(&dt).map(|(a, b)| a.hypot(*b)).collect();
            Ok(ConvergenceRow {
                n,
                eps,
                dist_eta: sup(&de),
                dist_theta: sup(&dt),
                dist_state: sup(&ds),
                energy_gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ConvergenceTable { eps_ref, rows }, trajs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub n: f64,
    /// `|proj_{K_n}(u) − u|` in the time-sampled norm.
    pub distance: f64,
    /// Same distance in the max norm over all levels.
    pub sup_distance: f64,
}

impl ConstraintRow {
    pub const HEADER: [&'static str; 3] = ["n", "distance", "sup_distance"];

    pub fn to_row(&self) -> Vec<f64> {
        vec![self.n, self.distance, self.sup_distance]
    }
}

/// Truncates both obstacles to `[−n, n]` and measures how far the projection moves `u`.
pub fn run_constraint_continuation(
    k: &BoxConstraint,
    u: &[Field],
    n_list: &[f64],
    tau: f64,
) -> Result<Vec<ConstraintRow>> {
    if !k.contains(u) {
        return Err(KwcError::InfeasibleConstraint("u is not in K".into()));
    }
    n_list
        .iter()
        .map(|&n| {
            if !(n >= 0.0) {
                return Err(KwcError::UnsupportedParameter(format!("truncation level {n} < 0")));
            }
            let pu = project(u, &k.truncated(n))?;
            let d: Vec<Field> = pu.iter().zip(u).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
            Ok(ConstraintRow {
                n,
                distance: norm_time(tau, &d),
                sup_distance: d.iter().fold(0.0, |m, f| m.max(f.max_abs())),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub eps: f64,
    /// Largest `|∇f_ε(∇θ)|` over all cells and time levels.
    pub sup_flux: f64,
    /// Fraction of (cell, level) pairs where `∇f_ε(∇θ) ∈ Sgn(∇θ)` up to `tol`.
    pub membership: f64,
}

impl DiagnosticsRow {
    pub const HEADER: [&'static str; 3] = ["eps", "sup_flux", "membership"];

    pub fn to_row(&self) -> Vec<f64> {
        vec![self.eps, self.sup_flux, self.membership]
    }
}

pub fn limit_diagnostics(eps: f64, traj: &StateTrajectory, tol: f64) -> Result<DiagnosticsRow> {
    let reg = Regularizer::new(eps)?;
    let grid = traj.grid();
    let mut sup: f64 = 0.0;
    let mut hits = 0usize;
    let mut total = 0usize;
    for th in &traj.theta {
        for y in cell_gradients(grid, th.values()) {
            let s = reg.gradient(y);
            sup = sup.max((s[0] * s[0] + s[1] * s[1]).sqrt());
            hits += usize::from(sgn_membership(y, s, tol));
            total += 1;
        }
    }
    Ok(DiagnosticsRow {
        eps,
        sup_flux: sup,
        membership: hits as f64 / total as f64,
    })
}

/// [`limit_diagnostics`] for each `(ε_n, trajectory)` pair.
pub fn run_limit_diagnostics(runs: &[(f64, &StateTrajectory)], tol: f64) -> Result<Vec<DiagnosticsRow>> {
    runs.iter().map(|(e, t)| limit_diagnostics(*e, t, tol)).collect()
}
