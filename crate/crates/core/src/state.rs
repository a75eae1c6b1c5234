//! Forward solver for the coupled order-parameter / orientation system
//!
//! ```text
//! ∂t η − Δη + g(η) + α′(η) f_ε(∇θ)            = M_u u   (Neumann)
//! α₀ ∂t θ − div(α(η) ∇f_ε(∇θ) + ν² ∇θ)        = M_v v   (θ = 0 on ∂Ω)
//! ```
//!
//! Both equations are the weighted gradient flow of the discrete energy
//!
//! ```text
//! E(η, θ) = ½|∇η|² + Σ W G(η) + Σ_cells h² ᾱ f_ε(∇_c θ) + ν²/2 (ε²|Ω| + |∇θ|²)
//! ```
//!
//! where `ᾱ` is the corner mean of `α(η)` and `∇_c` the cell-centre gradient.
//! Two time discretizations share that energy:
//!
//! * [`StateScheme::SemiImplicit`]: implicit diffusion with explicit reaction
//!   for η, then a θ solve with the diffusivity lagged at `∇θ_k`. Two SPD
//!   solves per step.
//! * [`StateScheme::Implicit`]: backward Euler, solved by Newton. Its Jacobian
//!   is exactly the linearized step operator of [`crate::sensitivity`], so the
//!   adjoint gradient of a cost built on this scheme is exact.

use crate::error::{KwcError, Result};
use crate::field::{
    cell_gradients, cell_gradients_transpose, stiffness_apply, stiffness_diagonal, Bc, Field,
    Grid2D,
};
use crate::linalg::{pcg, CgOptions};
use crate::model::{MaterialFunctions, ModelParams, Regularizer};
use crate::sensitivity::{StepCoefficients, StepOperator};
use serde::{Deserialize, Serialize};

/// Uniform time grid `t_k = k·τ`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(KwcError::UnsupportedParameter("need at least one time step".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(KwcError::UnsupportedParameter(format!(
                "final time must be > 0, got {t_final}"
            )));
        }
        Ok(Self { t_final, steps })
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateScheme {
    #[default]
    SemiImplicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub cg: CgOptions,
    pub scheme: StateScheme,
    /// Newton stops once `‖δ‖∞ ≤ newton_tol·(1 + ‖y‖∞)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cg: CgOptions::default(),
            scheme: StateScheme::SemiImplicit,
            newton_tol: 1e-12,
            newton_max_iter: 30,
        }
    }
}

impl SolverOptions {
    pub fn implicit() -> Self {
        Self {
            cg: CgOptions {
                tol: 1e-12,
                max_iter: 5000,
            },
            scheme: StateScheme::Implicit,
            ..Self::default()
        }
    }
}

/// Forcing pair `[u, v]` sampled on every node of the time grid.
/// Step `k → k+1` uses the samples at index `k+1`; index 0 is inert.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub u: Vec<Field>,
    pub v: Vec<Field>,
}

impl ControlPair {
    pub fn zeros(grid: Grid2D, steps: usize) -> Self {
        Self {
            u: vec![Field::zeros(grid, Bc::Neumann); steps + 1],
            v: vec![Field::zeros(grid, Bc::Neumann); steps + 1],
        }
    }

    /// Time-constant control.
    pub fn constant_in_time(u: Field, v: Field, steps: usize) -> Self {
        Self {
            u: vec![u; steps + 1],
            v: vec![v; steps + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn validate(&self, grid: &Grid2D, steps: usize) -> Result<()> {
        if self.u.len() != steps + 1 || self.v.len() != steps + 1 {
            return Err(KwcError::GridMismatch(format!(
                "control has {}/{} samples, time grid needs {}",
                self.u.len(),
                self.v.len(),
                steps + 1
            )));
        }
        for f in self.u.iter().chain(&self.v) {
            grid.check_same(f.grid())?;
            if !f.is_finite() {
                return Err(KwcError::InvalidField("non-finite control value".into()));
            }
        }
        Ok(())
    }

    /// `self + s·dir`, sample by sample.
    pub fn axpy(&self, s: f64, dir: &ControlPair) -> Result<Self> {
        let u = self
            .u
            .iter()
            .zip(&dir.u)
            .map(|(a, b)| a.axpy(s, b))
            .collect::<Result<Vec<_>>>()?;
        let v = self
            .v
            .iter()
            .zip(&dir.v)
            .map(|(a, b)| a.axpy(s, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { u, v })
    }
}

/// Time-indexed state pairs with their energies.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub eta: Vec<Field>,
    pub theta: Vec<Field>,
    pub energy: Vec<f64>,
}

impl StateTrajectory {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn tau(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn grid(&self) -> &Grid2D {
        self.eta[0].grid()
    }

    pub fn max_abs_eta(&self) -> f64 {
        self.eta.iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }
}

// ---------------------------------------------------------------------------
// Discrete building blocks shared with the sensitivity kernel.

/// Cell-centre gradients of θ and `f_ε` evaluated on them.
pub(crate) struct ThetaCells {
    pub grads: Vec<[f64; 2]>,
    pub f: Vec<f64>,
}

pub(crate) fn theta_cells(grid: &Grid2D, reg: &Regularizer, theta: &[f64]) -> ThetaCells {
    let grads = cell_gradients(grid, theta);
    let f = grads.iter().map(|g| reg.value(*g)).collect();
    ThetaCells { grads, f }
}

/// Node value `W⁻¹ Σ_{cells ∋ i} (h²/4) q_c`: the weighted mean of the
/// adjacent cell values.
pub(crate) fn cells_to_nodes(grid: &Grid2D, weights: &[f64], q: &[f64]) -> Vec<f64> {
    let quarter = 0.25 * grid.cell_weight();
    let mut out = vec![0.0; grid.n_nodes()];
    for (c, qc) in q.iter().enumerate() {
        for k in grid.cell_corners(c) {
            out[k] += quarter * qc;
        }
    }
    out.iter_mut().zip(weights).for_each(|(o, w)| *o /= w);
    out
}

/// Corner mean of `α(η)` on each cell.
pub(crate) fn alpha_cell_means(grid: &Grid2D, m: &MaterialFunctions, eta: &[f64]) -> Vec<f64> {
    let a: Vec<f64> = eta.iter().map(|&e| (m.alpha)(e)).collect();
    (0..grid.n_cells())
        .map(|c| grid.cell_corners(c).iter().map(|&k| a[k]).sum::<f64>() * 0.25)
        .collect()
}

pub(crate) fn alpha0_nodes(grid: &Grid2D, m: &MaterialFunctions, t: f64) -> Vec<f64> {
    (0..grid.n_nodes())
        .map(|k| {
            let (i, j) = grid.coords(k);
            (m.alpha0)(t, grid.x(i), grid.y(j))
        })
        .collect()
}

/// Applies `Σ_c G_cᵀ (s_c M_c) G_c x` for symmetric 2×2 cell matrices `[xx, xy, yy]`
/// (or scalar multiples of the identity when `mats` is `None`).
pub(crate) fn cell_operator_apply(
    grid: &Grid2D,
    scale: &[f64],
    mats: Option<&[[f64; 3]]>,
    x: &[f64],
    out: &mut [f64],
) {
    let st = grid.cell_gradient_stencil();
    for c in 0..grid.n_cells() {
        let k = grid.cell_corners(c);
        let mut g = [0.0; 2];
        for r in 0..4 {
            g[0] += st[r][0] * x[k[r]];
            g[1] += st[r][1] * x[k[r]];
        }
        let q = match mats {
            Some(m) => {
                let a = m[c];
                [a[0] * g[0] + a[1] * g[1], a[1] * g[0] + a[2] * g[1]]
            }
            None => g,
        };
        let s = scale[c];
        for r in 0..4 {
            out[k[r]] += s * (st[r][0] * q[0] + st[r][1] * q[1]);
        }
    }
}

pub(crate) fn cell_operator_diagonal(
    grid: &Grid2D,
    scale: &[f64],
    mats: Option<&[[f64; 3]]>,
    out: &mut [f64],
) {
    let st = grid.cell_gradient_stencil();
    for c in 0..grid.n_cells() {
        let k = grid.cell_corners(c);
        let a = mats.map(|m| m[c]).unwrap_or([1.0, 0.0, 1.0]);
        for r in 0..4 {
            let (sx, sy) = (st[r][0], st[r][1]);
            out[k[r]] += scale[c] * (a[0] * sx * sx + 2.0 * a[1] * sx * sy + a[2] * sy * sy);
        }
    }
}

fn zero_boundary(grid: &Grid2D, v: &mut [f64]) {
    for (k, x) in v.iter_mut().enumerate() {
        if grid.is_boundary_index(k) {
            *x = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------

/// Discrete free energy of the pair `(η, θ)`.
pub fn free_energy(eta: &Field, theta: &Field, params: &ModelParams) -> Result<f64> {
    let grid = *eta.grid();
    grid.check_same(theta.grid())?;
    let m = &params.materials;
    let w = grid.node_weights();
    let mut k = vec![0.0; grid.n_nodes()];
    stiffness_apply(&grid, eta.values(), 1.0, &mut k);
    let grad_eta_sq: f64 = k.iter().zip(eta.values()).map(|(a, b)| a * b).sum();
    let mut kt = vec![0.0; grid.n_nodes()];
    stiffness_apply(&grid, theta.values(), 1.0, &mut kt);
    let grad_theta_sq: f64 = kt.iter().zip(theta.values()).map(|(a, b)| a * b).sum();
    let potential: f64 = w
        .iter()
        .zip(eta.values())
        .map(|(wi, &e)| wi * (m.big_g)(e))
        .sum();
    let tc = theta_cells(&grid, &params.reg, theta.values());
    let abar = alpha_cell_means(&grid, m, eta.values());
    let h2 = grid.cell_weight();
    let tv: f64 = abar.iter().zip(&tc.f).map(|(a, f)| h2 * a * f).sum();
    let eps = params.eps();
    let nu2 = params.nu * params.nu;
    Ok(0.5 * grad_eta_sq + potential + tv + 0.5 * nu2 * (eps * eps * grid.area() + grad_theta_sq))
}

/// Smallest `L₀ ≥ |η₀|∞` with `g(L₀) ≥ M_u|u|∞` and `g(−L₀) ≤ −M_u|u|∞`,
/// located by bisection on `g`.
pub fn max_principle_bound(eta0: &Field, u: &[Field], params: &ModelParams) -> Result<f64> {
    let g = &params.materials.g;
    let c = params.m_u * u.iter().fold(0.0f64, |m, f| m.max(f.max_abs()));
    let ok = |l: f64| g(l) >= c && g(-l) <= -c;
    let lg = if ok(0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !ok(hi) {
            hi *= 2.0;
            if hi > 1e15 {
                return Err(KwcError::BoundSearch(
                    "g is not coercive; (A3) requires g -> ±inf".into(),
                ));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        hi
    };
    Ok(eta0.max_abs().max(lg))
}

fn cg_err(step: usize, f: crate::linalg::CgFailure) -> KwcError {
    KwcError::CgNonConvergence {
        step,
        iterations: f.iterations,
        residual: f.relative_residual,
    }
}

/// One time step from `w_k` to `t_{k+1}` with forcing samples `ctrl_k = (u_{k+1}, v_{k+1})`.
#[allow(clippy::too_many_arguments)]
pub fn step_state(
    w_k: (&Field, &Field),
    ctrl_k: (&Field, &Field),
    params: &ModelParams,
    t_next: f64,
    tau: f64,
    step: usize,
    opts: &SolverOptions,
) -> Result<(Field, Field)> {
    params.require_positive_eps()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(KwcError::UnsupportedParameter(format!("tau must be > 0, got {tau}")));
    }
    match opts.scheme {
        StateScheme::SemiImplicit => semi_implicit_step(w_k, ctrl_k, params, t_next, tau, step, opts),
        StateScheme::Implicit => implicit_step(w_k, ctrl_k, params, t_next, tau, step, opts),
    }
}

fn semi_implicit_step(
    (eta, theta): (&Field, &Field),
    (u, v): (&Field, &Field),
    params: &ModelParams,
    t_next: f64,
    tau: f64,
    step: usize,
    opts: &SolverOptions,
) -> Result<(Field, Field)> {
    let grid = *eta.grid();
    let n = grid.n_nodes();
    let m = &params.materials;
    let w = grid.node_weights();

    // η: (W/τ + K) η⁺ = W (η/τ − g(η) − α′(η) f̄ + M_u u)
    let tc = theta_cells(&grid, &params.reg, theta.values());
    let fbar = cells_to_nodes(&grid, &w, &tc.f);
    let b: Vec<f64> = (0..n)
        .map(|k| {
            let e = eta.values()[k];
            w[k] * (e / tau - (m.g)(e) - (m.alpha_prime)(e) * fbar[k] + params.m_u * u.values()[k])
        })
        .collect();
    let mut diag: Vec<f64> = w.iter().map(|wi| wi / tau).collect();
    stiffness_diagonal(&grid, 1.0, &mut diag);
    let mut eta_next = eta.values().to_vec();
    pcg(
        |x, out| {
            for k in 0..n {
                out[k] = w[k] / tau * x[k];
            }
            stiffness_apply(&grid, x, 1.0, out);
        },
        &b,
        &diag,
        &mut eta_next,
        opts.cg,
    )
    .map_err(|f| cg_err(step, f))?;

    // θ: (W α₀/τ + ν²K + Σ G_cᵀ h² ᾱ/f G_c) θ⁺ = W (α₀ θ/τ + M_v v), interior rows
    let a0 = alpha0_nodes(&grid, m, t_next);
    let abar = alpha_cell_means(&grid, m, &eta_next);
    let h2 = grid.cell_weight();
    let lagged: Vec<f64> = abar.iter().zip(&tc.f).map(|(a, f)| h2 * a / f).collect();
    let nu2 = params.nu * params.nu;
    let mut b: Vec<f64> = (0..n)
        .map(|k| w[k] * (a0[k] * theta.values()[k] / tau + params.m_v * v.values()[k]))
        .collect();
    zero_boundary(&grid, &mut b);
    let mut diag: Vec<f64> = (0..n).map(|k| w[k] * a0[k] / tau).collect();
    stiffness_diagonal(&grid, nu2, &mut diag);
    cell_operator_diagonal(&grid, &lagged, None, &mut diag);
    for (k, d) in diag.iter_mut().enumerate() {
        if grid.is_boundary_index(k) {
            *d = 1.0;
        }
    }
    let mut theta_next = theta.values().to_vec();
    let mut masked = vec![0.0; n];
    pcg(
        |x, out| {
            masked.copy_from_slice(x);
            zero_boundary(&grid, &mut masked);
            for k in 0..n {
                out[k] = w[k] * a0[k] / tau * masked[k];
            }
            stiffness_apply(&grid, &masked, nu2, out);
            cell_operator_apply(&grid, &lagged, None, &masked, out);
            for k in 0..n {
                if grid.is_boundary_index(k) {
                    out[k] = x[k];
                }
            }
        },
        &b,
        &diag,
        &mut theta_next,
        opts.cg,
    )
    .map_err(|f| cg_err(step, f))?;

    Ok((
        Field::from_raw(grid, Bc::Neumann, eta_next),
        Field::from_raw(grid, Bc::DirichletZero, theta_next),
    ))
}

/// Weighted residual of the backward-Euler step, stacked `[η-rows; θ-rows]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn implicit_residual(
    grid: &Grid2D,
    params: &ModelParams,
    prev: (&[f64], &[f64]),
    cur: (&[f64], &[f64]),
    forcing: (&[f64], &[f64]),
    a0: &[f64],
    tau: f64,
) -> Vec<f64> {
    let n = grid.n_nodes();
    let m = &params.materials;
    let w = grid.node_weights();
    let (eta, theta) = cur;
    let tc = theta_cells(grid, &params.reg, theta);
    let fbar = cells_to_nodes(grid, &w, &tc.f);
    let mut r = vec![0.0; 2 * n];
    let (re, rt) = r.split_at_mut(n);
    for k in 0..n {
        let e = eta[k];
        re[k] = w[k]
            * ((e - prev.0[k]) / tau + (m.g)(e) + (m.alpha_prime)(e) * fbar[k]
                - params.m_u * forcing.0[k]);
    }
    stiffness_apply(grid, eta, 1.0, re);
    for k in 0..n {
        rt[k] = w[k] * (a0[k] * (theta[k] - prev.1[k]) / tau - params.m_v * forcing.1[k]);
    }
    stiffness_apply(grid, theta, params.nu * params.nu, rt);
    let abar = alpha_cell_means(grid, m, eta);
    let h2 = grid.cell_weight();
    let flux: Vec<[f64; 2]> = tc
        .grads
        .iter()
        .zip(&abar)
        .map(|(g, a)| {
            let d = params.reg.gradient(*g);
            [h2 * a * d[0], h2 * a * d[1]]
        })
        .collect();
    cell_gradients_transpose(grid, &flux, rt);
    for k in 0..n {
        if grid.is_boundary_index(k) {
            rt[k] = theta[k];
        }
    }
    r
}

fn implicit_step(
    (eta, theta): (&Field, &Field),
    (u, v): (&Field, &Field),
    params: &ModelParams,
    t_next: f64,
    tau: f64,
    step: usize,
    opts: &SolverOptions,
) -> Result<(Field, Field)> {
    let grid = *eta.grid();
    let n = grid.n_nodes();
    let a0 = alpha0_nodes(&grid, &params.materials, t_next);
    let mut y: Vec<f64> = eta.values().iter().chain(theta.values()).copied().collect();
    let mut last = f64::INFINITY;
    for _ in 0..opts.newton_max_iter {
        let (ye, yt) = y.split_at(n);
        let r = implicit_residual(
            &grid,
            params,
            (eta.values(), theta.values()),
            (ye, yt),
            (u.values(), v.values()),
            &a0,
            tau,
        );
        let coeffs = StepCoefficients::from_state(&grid, params, &a0, ye, yt)?;
        let op = StepOperator::new(&grid, &coeffs, params.nu, tau);
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let mut delta = vec![0.0; 2 * n];
        pcg(|x, out| op.apply(x, out), &rhs, &op.diagonal(), &mut delta, opts.cg)
            .map_err(|f| cg_err(step, f))?;
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        y.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
        last = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if last <= opts.newton_tol * scale {
            let (ye, yt) = y.split_at(n);
            return Ok((
                Field::from_raw(grid, Bc::Neumann, ye.to_vec()),
                Field::from_raw(grid, Bc::DirichletZero, yt.to_vec()),
            ));
        }
    }
    Err(KwcError::NewtonNonConvergence { step, update: last })
}

/// Validates a state initial pair against the boundary conditions of the system.
pub(crate) fn check_initial(eta0: &Field, theta0: &Field) -> Result<()> {
    eta0.grid().check_same(theta0.grid())?;
    if eta0.bc() != Bc::Neumann || theta0.bc() != Bc::DirichletZero {
        return Err(KwcError::InvalidField(
            "initial eta must be Neumann and theta DirichletZero".into(),
        ));
    }
    if !eta0.is_finite() || !theta0.is_finite() {
        return Err(KwcError::InvalidField("non-finite initial data".into()));
    }
    Ok(())
}

/// Runs `time.steps` steps from `(η₀, θ₀)`.
pub fn solve_state(
    w0: (&Field, &Field),
    ctrl: &ControlPair,
    params: &ModelParams,
    time: TimeGrid,
    opts: &SolverOptions,
) -> Result<StateTrajectory> {
    params.require_positive_eps()?;
    check_initial(w0.0, w0.1)?;
    let grid = *w0.0.grid();
    ctrl.validate(&grid, time.steps)?;
    let tau = time.tau();
    let mut eta = Vec::with_capacity(time.steps + 1);
    let mut theta = Vec::with_capacity(time.steps + 1);
    let mut energy = Vec::with_capacity(time.steps + 1);
    eta.push(w0.0.clone());
    theta.push(w0.1.clone());
    energy.push(free_energy(w0.0, w0.1, params)?);
    for k in 0..time.steps {
        let (e, t) = step_state(
            (&eta[k], &theta[k]),
            (&ctrl.u[k + 1], &ctrl.v[k + 1]),
            params,
            time.time(k + 1),
            tau,
            k,
            opts,
        )?;
        energy.push(free_energy(&e, &t, params)?);
        eta.push(e);
        theta.push(t);
    }
    Ok(StateTrajectory {
        times: time.times(),
        eta,
        theta,
        energy,
    })
}
