//! Linear parabolic kernel for the coupled pair `[p, z]`:
//!
//! ```text
//! ∂t p − Δp + μ p + λ p + ω·∇z            = h   (Neumann)
//! a ∂t z + b z − div((A + ν²) ∇z + p ω)    = k   (z = 0 on ∂Ω)
//! ```
//!
//! Each backward-Euler step is one monolithic weighted system
//!
//! ```text
//! Ŝ_k y_{k+1} = R̂_k y_k + W̃ r_{k+1},   R̂_k = diag(W/τ, W a_{k+1}/τ)
//! ```
//!
//! and the adjoint sweep solves `Ŝ_kᵀ q_k = W̃ f_{k+1} + R̂_{k+1}ᵀ q_{k+1}` from
//! `q_M = 0`. The coupling `ω` is stored per cell corner and `A` per cell,
//! matching the cell-centre gradients of the state energy, so that `Ŝ_k` is
//! exactly the Jacobian of the implicit state step.

use crate::error::{KwcError, Result};
use crate::field::{stiffness_apply, stiffness_diagonal, Bc, Field, Grid2D};
use crate::linalg::{pcg, CgOptions};
use crate::model::{hessian_with_value, ModelParams};
use crate::state::{
    alpha0_nodes, alpha_cell_means, cell_operator_apply, cell_operator_diagonal, cells_to_nodes,
    theta_cells, StateTrajectory,
};

/// Coefficients of one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `ω` per cell and corner (corner order of [`Grid2D::cell_corners`]).
    pub omega: Vec<[[f64; 2]; 4]>,
    /// Symmetric `A` per cell as `[xx, xy, yy]`.
    pub a_mat: Vec<[f64; 3]>,
}

impl StepCoefficients {
    /// Linearization of the implicit state step around `(η, θ)`:
    /// `μ = α″(η) f̄`, `λ = g′(η)`, `ω = α′(η) ∇f_ε`, `A = ᾱ ∇²f_ε`, `a = α₀`, `b = 0`.
    pub(crate) fn from_state(
        grid: &Grid2D,
        params: &ModelParams,
        a0: &[f64],
        eta: &[f64],
        theta: &[f64],
    ) -> Result<Self> {
        params.require_positive_eps()?;
        let m = &params.materials;
        let w = grid.node_weights();
        let tc = theta_cells(grid, &params.reg, theta);
        let fbar = cells_to_nodes(grid, &w, &tc.f);
        let abar = alpha_cell_means(grid, m, eta);
        let ap: Vec<f64> = eta.iter().map(|&e| (m.alpha_prime)(e)).collect();
        let mut omega = Vec::with_capacity(grid.n_cells());
        let mut a_mat = Vec::with_capacity(grid.n_cells());
        for c in 0..grid.n_cells() {
            let y = tc.grads[c];
            let f = tc.f[c];
            let d = [y[0] / f, y[1] / f];
            let h = hessian_with_value(y, f);
            a_mat.push([abar[c] * h[0][0], abar[c] * h[0][1], abar[c] * h[1][1]]);
            let k = grid.cell_corners(c);
            omega.push(k.map(|i| [ap[i] * d[0], ap[i] * d[1]]));
        }
        Ok(Self {
            a: a0.to_vec(),
            b: vec![0.0; grid.n_nodes()],
            mu: eta.iter().zip(&fbar).map(|(&e, f)| (m.alpha_double_prime)(e) * f).collect(),
            lambda: eta.iter().map(|&e| (m.g_prime)(e)).collect(),
            omega,
            a_mat,
        })
    }

    fn check(&self, grid: &Grid2D, k: usize) -> Result<()> {
        let n = grid.n_nodes();
        let nc = grid.n_cells();
        if [self.a.len(), self.b.len(), self.mu.len(), self.lambda.len()] != [n; 4]
            || self.omega.len() != nc
            || self.a_mat.len() != nc
        {
            return Err(KwcError::GridMismatch(format!("coefficient sizes at level {k}")));
        }
        let finite = self
            .a
            .iter()
            .chain(&self.b)
            .chain(&self.mu)
            .chain(&self.lambda)
            .chain(self.omega.iter().flatten().flatten())
            .chain(self.a_mat.iter().flatten())
            .all(|x| x.is_finite());
        if !finite {
            return Err(KwcError::CoefficientClass(format!("non-finite coefficient at level {k}")));
        }
        if let Some(x) = self.a.iter().find(|&&x| x <= 0.0) {
            return Err(KwcError::CoefficientClass(format!("a = {x} is not positive at level {k}")));
        }
        if let Some(x) = self.mu.iter().find(|&&x| x < 0.0) {
            return Err(KwcError::CoefficientClass(format!("mu = {x} is negative at level {k}")));
        }
        for m in &self.a_mat {
            let half_gap = (0.25 * (m[0] - m[2]).powi(2) + m[1] * m[1]).sqrt();
            let lmin = 0.5 * (m[0] + m[2]) - half_gap;
            if lmin < -1e-12 * (m[0].abs() + m[2].abs() + half_gap) {
                return Err(KwcError::CoefficientClass(format!(
                    "A = {m:?} is not positive semidefinite at level {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-time coefficient record on a uniform time grid, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sextuplet {
    grid: Grid2D,
    nu: f64,
    tau: f64,
    levels: Vec<StepCoefficients>,
}

impl Sextuplet {
    pub fn new(grid: Grid2D, nu: f64, tau: f64, levels: Vec<StepCoefficients>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(KwcError::UnsupportedParameter("need at least two time levels".into()));
        }
        if !(nu.is_finite() && nu > 0.0 && tau.is_finite() && tau > 0.0) {
            return Err(KwcError::UnsupportedParameter(format!("nu = {nu}, tau = {tau}")));
        }
        for (k, l) in levels.iter().enumerate() {
            l.check(&grid, k)?;
        }
        Ok(Self { grid, nu, tau, levels })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &StepCoefficients {
        &self.levels[k]
    }

    /// Step matrix `Ŝ_k` (coefficients at level `k + 1`).
    pub fn step_operator(&self, k: usize) -> StepOperator<'_> {
        StepOperator::new(&self.grid, &self.levels[k + 1], self.nu, self.tau)
    }

    /// Coefficients of the same sweep run forward in reversed time: solving the
    /// reversed forward problem from zero and reading it backwards reproduces
    /// the adjoint sweep.
    pub fn time_reversed(&self) -> Result<Self> {
        let m = self.steps();
        let tau = self.tau;
        let mut levels = Vec::with_capacity(m + 1);
        levels.push(self.levels[m].clone());
        for j in 1..=m {
            let src = &self.levels[m - j + 1];
            let mut l = src.clone();
            if j >= 2 {
                let next = &self.levels[m - j + 2];
                l.a = next.a.clone();
                l.b = (0..src.b.len())
                    .map(|i| src.b[i] + (src.a[i] - next.a[i]) / tau)
                    .collect();
            }
            levels.push(l);
        }
        Self::new(self.grid, self.nu, tau, levels)
    }
}

/// Coefficients of the linearization around every level of a state trajectory.
pub fn coefficients_from_state(traj: &StateTrajectory, params: &ModelParams) -> Result<Sextuplet> {
    params.require_positive_eps()?;
    let grid = *traj.grid();
    let levels = (0..traj.times.len())
        .map(|k| {
            let a0 = alpha0_nodes(&grid, &params.materials, traj.times[k]);
            StepCoefficients::from_state(&grid, params, &a0, traj.eta[k].values(), traj.theta[k].values())
        })
        .collect::<Result<Vec<_>>>()?;
    Sextuplet::new(grid, params.nu, traj.tau(), levels)
}

/// Weighted step matrix acting on stacked `[p; z]`.
pub struct StepOperator<'a> {
    grid: &'a Grid2D,
    c: &'a StepCoefficients,
    nu: f64,
    tau: f64,
    w: Vec<f64>,
    h2: Vec<f64>,
}

impl<'a> StepOperator<'a> {
    pub fn new(grid: &'a Grid2D, c: &'a StepCoefficients, nu: f64, tau: f64) -> Self {
        Self {
            grid,
            c,
            nu,
            tau,
            w: grid.node_weights(),
            h2: vec![grid.cell_weight(); grid.n_cells()],
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.grid.n_nodes()
    }

    /// Accumulates `B z`: node `i` of cell `c` receives `(h²/4) ω_{c,i}·∇_c z`.
    fn couple_z_to_p(&self, z: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let st = g.cell_gradient_stencil();
        let q = 0.25 * g.cell_weight();
        for c in 0..g.n_cells() {
            let k = g.cell_corners(c);
            let mut gz = [0.0; 2];
            for r in 0..4 {
                gz[0] += st[r][0] * z[k[r]];
                gz[1] += st[r][1] * z[k[r]];
            }
            let om = &self.c.omega[c];
            for r in 0..4 {
                out[k[r]] += q * (om[r][0] * gz[0] + om[r][1] * gz[1]);
            }
        }
    }

    /// Accumulates `Bᵀ p = Σ_c ∇_cᵀ (h²/4) Σ_i ω_{c,i} p_i`.
    fn couple_p_to_z(&self, p: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let st = g.cell_gradient_stencil();
        let q = 0.25 * g.cell_weight();
        for c in 0..g.n_cells() {
            let k = g.cell_corners(c);
            let om = &self.c.omega[c];
            let mut s = [0.0; 2];
            for r in 0..4 {
                s[0] += q * om[r][0] * p[k[r]];
                s[1] += q * om[r][1] * p[k[r]];
            }
            for r in 0..4 {
                out[k[r]] += st[r][0] * s[0] + st[r][1] * s[1];
            }
        }
    }

    /// `out = Ŝ x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let n = g.n_nodes();
        let (p, z) = x.split_at(n);
        let mut zm = z.to_vec();
        for (k, v) in zm.iter_mut().enumerate() {
            if g.is_boundary_index(k) {
                *v = 0.0;
            }
        }
        let (op, oz) = out.split_at_mut(n);
        let c = self.c;
        for k in 0..n {
            op[k] = self.w[k] * (1.0 / self.tau + c.mu[k] + c.lambda[k]) * p[k];
            oz[k] = self.w[k] * (c.a[k] / self.tau + c.b[k]) * zm[k];
        }
        stiffness_apply(g, p, 1.0, op);
        stiffness_apply(g, &zm, self.nu * self.nu, oz);
        cell_operator_apply(g, &self.h2, Some(&c.a_mat), &zm, oz);
        self.couple_z_to_p(&zm, op);
        self.couple_p_to_z(p, oz);
        for k in 0..n {
            if g.is_boundary_index(k) {
                oz[k] = z[k];
            }
        }
    }

    /// `out = Ŝᵀ x`. The weighted step matrix is symmetric (the two couplings
    /// are mutual transposes and the diagonal blocks are symmetric), so this is
    /// the same product.
    pub fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let g = self.grid;
        let n = g.n_nodes();
        let c = self.c;
        let mut d = vec![0.0; 2 * n];
        let (dp, dz) = d.split_at_mut(n);
        for k in 0..n {
            dp[k] = self.w[k] * (1.0 / self.tau + c.mu[k] + c.lambda[k]);
            dz[k] = self.w[k] * (c.a[k] / self.tau + c.b[k]);
        }
        stiffness_diagonal(g, 1.0, dp);
        stiffness_diagonal(g, self.nu * self.nu, dz);
        cell_operator_diagonal(g, &self.h2, Some(&c.a_mat), dz);
        for k in 0..n {
            if g.is_boundary_index(k) {
                dz[k] = 1.0;
            }
            // Jacobi needs positive entries; the operator itself is unchanged.
            if !(dp[k] > 0.0) {
                dp[k] = self.w[k] / self.tau;
            }
            if !(dz[k] > 0.0) {
                dz[k] = self.w[k] / self.tau;
            }
        }
        d
    }

    /// Dense matrix of [`Self::apply`] (column by column).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        dense_of(self.dim(), |x, o| self.apply(x, o))
    }

    /// Dense matrix of [`Self::apply_transpose`].
    pub fn to_dense_transpose(&self) -> Vec<Vec<f64>> {
        dense_of(self.dim(), |x, o| self.apply_transpose(x, o))
    }
}

fn dense_of(n: usize, f: impl Fn(&[f64], &mut [f64])) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        f(&e, &mut col);
        for i in 0..n {
            m[i][j] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Forward solution `[p, z]` of the linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub p: Vec<Field>,
    pub z: Vec<Field>,
}

/// Backward solution with `[p, z](T) = 0`. Level `k` acts on the control
/// sample at `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub p: Vec<Field>,
    pub z: Vec<Field>,
}

fn check_rhs(grid: &Grid2D, steps: usize, rp: &[Field], rz: &[Field]) -> Result<()> {
    if rp.len() != steps + 1 || rz.len() != steps + 1 {
        return Err(KwcError::GridMismatch(format!(
            "right-hand side has {}/{} levels, expected {}",
            rp.len(),
            rz.len(),
            steps + 1
        )));
    }
    for f in rp.iter().chain(rz) {
        grid.check_same(f.grid())?;
    }
    Ok(())
}

fn weighted_rhs(grid: &Grid2D, w: &[f64], rp: &Field, rz: &Field, out: &mut [f64]) {
    let n = grid.n_nodes();
    for k in 0..n {
        out[k] += w[k] * rp.values()[k];
        if !grid.is_boundary_index(k) {
            out[n + k] += w[k] * rz.values()[k];
        }
    }
}

/// `R̂ y` with `R̂ = diag(W/τ, W a/τ)` on interior z-rows.
fn history_term(grid: &Grid2D, w: &[f64], a: &[f64], tau: f64, y: &[f64], out: &mut [f64]) {
    let n = grid.n_nodes();
    for k in 0..n {
        out[k] += w[k] / tau * y[k];
        if !grid.is_boundary_index(k) {
            out[n + k] += w[k] * a[k] / tau * y[n + k];
        }
    }
}

fn split_pair(grid: Grid2D, y: &[f64]) -> (Field, Field) {
    let n = grid.n_nodes();
    (
        Field::from_raw(grid, Bc::Neumann, y[..n].to_vec()),
        Field::from_raw(grid, Bc::DirichletZero, y[n..].to_vec()),
    )
}

fn cg_err(step: usize, f: crate::linalg::CgFailure) -> KwcError {
    KwcError::CgNonConvergence {
        step,
        iterations: f.iterations,
        residual: f.relative_residual,
    }
}

/// Forward sweep from `init` with right-hand sides `r_k`, `k = 1..=M` (level 0 unused).
pub fn solve_linearized(
    coeffs: &Sextuplet,
    init: (&Field, &Field),
    rhs_p: &[Field],
    rhs_z: &[Field],
    cg: CgOptions,
) -> Result<SensitivityTrajectory> {
    let grid = coeffs.grid;
    grid.check_same(init.0.grid())?;
    grid.check_same(init.1.grid())?;
    let m = coeffs.steps();
    check_rhs(&grid, m, rhs_p, rhs_z)?;
    let n = grid.n_nodes();
    let w = grid.node_weights();
    let mut y: Vec<f64> = init.0.values().iter().chain(init.1.values()).copied().collect();
    for k in n..2 * n {
        if grid.is_boundary_index(k - n) {
            y[k] = 0.0;
        }
    }
    let (p0, z0) = split_pair(grid, &y);
    let mut p = vec![p0];
    let mut z = vec![z0];
    for k in 0..m {
        let op = coeffs.step_operator(k);
        let mut b = vec![0.0; 2 * n];
        history_term(&grid, &w, &coeffs.levels[k + 1].a, coeffs.tau, &y, &mut b);
        weighted_rhs(&grid, &w, &rhs_p[k + 1], &rhs_z[k + 1], &mut b);
        pcg(|x, o| op.apply(x, o), &b, &op.diagonal(), &mut y, cg).map_err(|f| cg_err(k, f))?;
        let (pk, zk) = split_pair(grid, &y);
        p.push(pk);
        z.push(zk);
    }
    Ok(SensitivityTrajectory { p, z })
}

/// Backward sweep `Ŝ_kᵀ q_k = W̃ f_{k+1} + R̂_{k+1}ᵀ q_{k+1}` from `q_M = 0`.
pub fn solve_adjoint(
    coeffs: &Sextuplet,
    rhs_p: &[Field],
    rhs_z: &[Field],
    cg: CgOptions,
) -> Result<AdjointTrajectory> {
    let grid = coeffs.grid;
    let m = coeffs.steps();
    check_rhs(&grid, m, rhs_p, rhs_z)?;
    let n = grid.n_nodes();
    let w = grid.node_weights();
    let zero = split_pair(grid, &vec![0.0; 2 * n]);
    let mut p = vec![zero.0; m + 1];
    let mut z = vec![zero.1; m + 1];
    let mut q = vec![0.0; 2 * n];
    let mut next = vec![0.0; 2 * n];
    for k in (0..m).rev() {
        let op = coeffs.step_operator(k);
        let mut b = vec![0.0; 2 * n];
        weighted_rhs(&grid, &w, &rhs_p[k + 1], &rhs_z[k + 1], &mut b);
        if k + 1 < m {
            history_term(&grid, &w, &coeffs.levels[k + 2].a, coeffs.tau, &next, &mut b);
        }
        pcg(|x, o| op.apply_transpose(x, o), &b, &op.diagonal(), &mut q, cg)
            .map_err(|f| cg_err(k, f))?;
        let (pk, zk) = split_pair(grid, &q);
        p[k] = pk;
        z[k] = zk;
        next.copy_from_slice(&q);
    }
    Ok(AdjointTrajectory { p, z })
}

/// Adjoint obtained by running [`solve_linearized`] on the time-reversed
/// coefficients from zero data and reversing the result.
pub fn solve_adjoint_by_reversal(
    coeffs: &Sextuplet,
    rhs_p: &[Field],
    rhs_z: &[Field],
    cg: CgOptions,
) -> Result<AdjointTrajectory> {
    let grid = coeffs.grid;
    let m = coeffs.steps();
    check_rhs(&grid, m, rhs_p, rhs_z)?;
    let rev = coeffs.time_reversed()?;
    let zero_p = Field::zeros(grid, Bc::Neumann);
    let zero_z = Field::zeros(grid, Bc::DirichletZero);
    let mut rp = vec![zero_p.clone()];
    let mut rz = vec![zero_p.clone()];
    for j in 1..=m {
        rp.push(rhs_p[m - j + 1].clone());
        rz.push(rhs_z[m - j + 1].clone());
    }
    let s = solve_linearized(&rev, (&zero_p, &zero_z), &rp, &rz, cg)?;
    Ok(AdjointTrajectory {
        p: s.p.into_iter().rev().collect(),
        z: s.z.into_iter().rev().collect(),
    })
}

/// `Σ_{k=1}^{M} τ ⟨a_k, b_k⟩_W` over both components.
pub fn pairing_forward(tau: f64, a: (&[Field], &[Field]), b: (&[Field], &[Field])) -> f64 {
    let mut s = 0.0;
    for k in 1..a.0.len() {
        s += tau * (weighted(&a.0[k], &b.0[k]) + weighted(&a.1[k], &b.1[k]));
    }
    s
}

/// `Σ_{k=0}^{M−1} τ ⟨q_k, h_{k+1}⟩_W`: pairs adjoint levels with control samples.
pub fn pairing_adjoint(tau: f64, q: (&[Field], &[Field]), h: (&[Field], &[Field])) -> f64 {
    let mut s = 0.0;
    for k in 0..q.0.len() - 1 {
        s += tau * (weighted(&q.0[k], &h.0[k + 1]) + weighted(&q.1[k], &h.1[k + 1]));
    }
    s
}

fn weighted(a: &Field, b: &Field) -> f64 {
    crate::field::weighted_dot(a.grid(), a.values(), b.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{solve_state, ControlPair, SolverOptions, TimeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(eps: f64) -> ModelParams {
        ModelParams::default_preset(eps).unwrap()
    }

    fn random_field(g: Grid2D, bc: Bc, rng: &mut ChaCha8Rng, amp: f64) -> Field {
        let mut f = Field::from_raw(g, Bc::Neumann, (0..g.n_nodes()).map(|_| rng.gen_range(-amp..amp)).collect());
        if bc == Bc::DirichletZero {
            f = Field::from_values(
                g,
                bc,
                f.values()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| if g.is_boundary_index(k) { 0.0 } else { *v })
                    .collect(),
            )
            .unwrap();
        }
        f
    }

    fn state_coeffs(g: Grid2D, steps: usize, seed: u64) -> (Sextuplet, ModelParams) {
        let p = params(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e0 = random_field(g, Bc::Neumann, &mut rng, 1.0);
        let t0 = random_field(g, Bc::DirichletZero, &mut rng, 1.0);
        let tr = solve_state((&e0, &t0), &ControlPair::zeros(g, steps), &p, TimeGrid::new(0.05, steps).unwrap(), &SolverOptions::implicit())
            .unwrap();
        (coefficients_from_state(&tr, &p).unwrap(), p)
    }

    #[test]
    fn zero_state_coefficients_closed_form() {
        let g = Grid2D::unit_square(5).unwrap();
        let eps = 0.25;
        let p = params(eps);
        let z = vec![0.0; g.n_nodes()];
        let c = StepCoefficients::from_state(&g, &p, &vec![1.0; g.n_nodes()], &z, &z).unwrap();
        assert!(c.mu.iter().all(|m| (m - eps).abs() < 1e-14));
        assert!(c.lambda.iter().all(|l| *l == 1.0));
        assert!(c.omega.iter().flatten().flatten().all(|o| *o == 0.0));
        for a in &c.a_mat {
            assert!((a[0] - 0.1 / eps).abs() < 1e-14 && a[1] == 0.0 && (a[2] - 0.1 / eps).abs() < 1e-14);
        }
    }

    #[test]
    fn class_violations_are_rejected() {
        let g = Grid2D::unit_square(4).unwrap();
        let p = params(0.5);
        let z = vec![0.0; g.n_nodes()];
        let c = StepCoefficients::from_state(&g, &p, &vec![1.0; g.n_nodes()], &z, &z).unwrap();
        let ok = Sextuplet::new(g, 1.0, 0.1, vec![c.clone(), c.clone()]);
        assert!(ok.is_ok());
        let mut bad = c.clone();
        bad.a[3] = 0.0;
        assert!(matches!(Sextuplet::new(g, 1.0, 0.1, vec![c.clone(), bad]), Err(KwcError::CoefficientClass(_))));
        let mut bad = c.clone();
        bad.mu[0] = -1e-3;
        assert!(Sextuplet::new(g, 1.0, 0.1, vec![c.clone(), bad]).is_err());
        let mut bad = c.clone();
        bad.a_mat[0] = [1.0, 2.0, 1.0];
        assert!(Sextuplet::new(g, 1.0, 0.1, vec![c, bad]).is_err());
    }

    #[test]
    fn coefficient_bounds_along_a_trajectory() {
        let g = Grid2D::unit_square(7).unwrap();
        let (s, p) = state_coeffs(g, 4, 3);
        for k in 0..=4 {
            let l = s.level(k);
            assert!(l.mu.iter().all(|m| *m >= 0.0));
            for a in &l.a_mat {
                let tr = a[0] + a[2];
                let det = a[0] * a[2] - a[1] * a[1];
                let lmax = 0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt());
                // ᾱ ≤ α(|η|∞); the trajectory stays within |η| ≤ 1
                assert!(lmax <= (p.materials.alpha)(1.0) * 3.0 / p.eps() + 1e-12);
            }
        }
    }

    #[test]
    fn step_matrix_transpose_is_exact() {
        let g = Grid2D::unit_square(5).unwrap();
        let (s, _) = state_coeffs(g, 3, 11);
        for k in 0..3 {
            let op = s.step_operator(k);
            let a = op.to_dense();
            let at = op.to_dense_transpose();
            let n = op.dim();
            for i in 0..n {
                for j in 0..n {
                    assert!((a[i][j] - at[j][i]).abs() <= 1e-12 * (1.0 + a[i][j].abs()));
                    assert!((a[i][j] - a[j][i]).abs() <= 1e-12 * (1.0 + a[i][j].abs()));
                }
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_solutions() {
        let g = Grid2D::unit_square(6).unwrap();
        let (s, _) = state_coeffs(g, 3, 5);
        let zp = vec![Field::zeros(g, Bc::Neumann); 4];
        let zz = vec![Field::zeros(g, Bc::DirichletZero); 4];
        let lin = solve_linearized(&s, (&zp[0], &zz[0]), &zp, &zz, CgOptions::default()).unwrap();
        assert!(lin.p.iter().chain(&lin.z).all(|f| f.max_abs() == 0.0));
        let adj = solve_adjoint(&s, &zp, &zz, CgOptions::default()).unwrap();
        assert!(adj.p.iter().chain(&adj.z).all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn zero_state_decouples() {
        let g = Grid2D::unit_square(6).unwrap();
        let p = params(0.5);
        let tr = solve_state(
            (&Field::zeros(g, Bc::Neumann), &Field::zeros(g, Bc::DirichletZero)),
            &ControlPair::zeros(g, 4),
            &p,
            TimeGrid::new(0.2, 4).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        let s = coefficients_from_state(&tr, &p).unwrap();
        let h = vec![Field::constant(g, Bc::Neumann, 1.0); 5];
        let zz = vec![Field::zeros(g, Bc::DirichletZero); 5];
        let lin = solve_linearized(&s, (&h[0].scaled(0.0), &zz[0]), &h, &zz, CgOptions { tol: 1e-13, max_iter: 5000 }).unwrap();
        assert!(lin.z.iter().all(|f| f.max_abs() == 0.0));
        // spatially constant p solves p' = −(λ + μ) p + 1 with backward Euler
        let r = 1.0 + p.eps();
        let tau = 0.05;
        let mut pk = 0.0;
        for k in 1..=4 {
            pk = (pk / tau + 1.0) / (1.0 / tau + r);
            for v in lin.p[k].values() {
                assert!((v - pk).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn linearity() {
        let g = Grid2D::unit_square(6).unwrap();
        let (s, _) = state_coeffs(g, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mk = |rng: &mut ChaCha8Rng| {
            let rp: Vec<Field> = (0..4).map(|_| random_field(g, Bc::Neumann, rng, 1.0)).collect();
            let rz: Vec<Field> = (0..4).map(|_| random_field(g, Bc::Neumann, rng, 1.0)).collect();
            (rp, rz)
        };
        let (p1, z1) = mk(&mut rng);
        let (p2, z2) = mk(&mut rng);
        let comb = |a: &[Field], b: &[Field]| -> Vec<Field> {
            a.iter().zip(b).map(|(x, y)| x.scaled(2.0).axpy(-3.0, y).unwrap()).collect()
        };
        let cg = CgOptions { tol: 1e-13, max_iter: 5000 };
        let init = (Field::zeros(g, Bc::Neumann), Field::zeros(g, Bc::DirichletZero));
        let s1 = solve_linearized(&s, (&init.0, &init.1), &p1, &z1, cg).unwrap();
        let s2 = solve_linearized(&s, (&init.0, &init.1), &p2, &z2, cg).unwrap();
        let s3 = solve_linearized(&s, (&init.0, &init.1), &comb(&p1, &p2), &comb(&z1, &z2), cg).unwrap();
        for k in 0..4 {
            let e = s3.p[k].sub(&s1.p[k].scaled(2.0).axpy(-3.0, &s2.p[k]).unwrap()).unwrap().max_abs();
            let f = s3.z[k].sub(&s1.z[k].scaled(2.0).axpy(-3.0, &s2.z[k]).unwrap()).unwrap().max_abs();
            assert!(e < 1e-10 && f < 1e-10);
        }
    }

    #[test]
    fn conjugacy_and_time_reversal_route() {
        let g = Grid2D::unit_square(6).unwrap();
        let m = 5;
        let (s, _) = state_coeffs(g, m, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cg = CgOptions { tol: 1e-13, max_iter: 5000 };
        let fp: Vec<Field> = (0..=m).map(|_| random_field(g, Bc::Neumann, &mut rng, 1.0)).collect();
        let fz: Vec<Field> = (0..=m).map(|_| random_field(g, Bc::DirichletZero, &mut rng, 1.0)).collect();
        let hp: Vec<Field> = (0..=m).map(|_| random_field(g, Bc::Neumann, &mut rng, 1.0)).collect();
        let hz: Vec<Field> = (0..=m).map(|_| random_field(g, Bc::DirichletZero, &mut rng, 1.0)).collect();
        let zero = (Field::zeros(g, Bc::Neumann), Field::zeros(g, Bc::DirichletZero));
        let lin = solve_linearized(&s, (&zero.0, &zero.1), &hp, &hz, cg).unwrap();
        let adj = solve_adjoint(&s, &fp, &fz, cg).unwrap();
        assert_eq!(adj.p[m].max_abs(), 0.0);
        assert_eq!(adj.z[m].max_abs(), 0.0);
        let lhs = pairing_adjoint(s.tau(), (&adj.p, &adj.z), (&hp, &hz));
        let rhs = pairing_forward(s.tau(), (&fp, &fz), (&lin.p, &lin.z));
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");

        let rev = solve_adjoint_by_reversal(&s, &fp, &fz, cg).unwrap();
        for k in 0..=m {
            assert!(rev.p[k].sub(&adj.p[k]).unwrap().max_abs() < 1e-9);
            assert!(rev.z[k].sub(&adj.z[k]).unwrap().max_abs() < 1e-9);
        }
    }

    #[test]
    fn reversal_handles_time_dependent_a() {
        let g = Grid2D::unit_square(5).unwrap();
        let (s, _) = state_coeffs(g, 4, 1);
        let mut levels: Vec<StepCoefficients> = (0..=4).map(|k| s.level(k).clone()).collect();
        for (k, l) in levels.iter_mut().enumerate() {
            l.a.iter_mut().enumerate().for_each(|(i, a)| *a = 1.0 + 0.3 * k as f64 + 0.01 * i as f64);
        }
        let s = Sextuplet::new(*s.grid(), s.nu(), s.tau(), levels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fp: Vec<Field> = (0..=4).map(|_| random_field(g, Bc::Neumann, &mut rng, 1.0)).collect();
        let fz: Vec<Field> = (0..=4).map(|_| random_field(g, Bc::DirichletZero, &mut rng, 1.0)).collect();
        let cg = CgOptions { tol: 1e-13, max_iter: 5000 };
        let a = solve_adjoint(&s, &fp, &fz, cg).unwrap();
        let b = solve_adjoint_by_reversal(&s, &fp, &fz, cg).unwrap();
        for k in 0..=4 {
            assert!(a.p[k].sub(&b.p[k]).unwrap().max_abs() < 1e-9);
            assert!(a.z[k].sub(&b.z[k]).unwrap().max_abs() < 1e-9);
        }
    }
}
