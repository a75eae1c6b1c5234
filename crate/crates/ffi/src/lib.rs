//! C ABI over `kwc-core`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns a [`KwcStatus`]; on failure
//! `kwc_last_error_message` holds a description until the next failing call
//! on the same thread. Field arrays are node-major (`k = j·nx + i`) and
//! trajectories or controls are level-major with `steps + 1` levels.

use kwc_core::control::{optimize, BoxConstraint, ControlProblem, OptimizerOptions, TargetProfile};
use kwc_core::field::{Bc, Field, Grid2D};
use kwc_core::linalg::CgOptions;
use kwc_core::model::{MaterialFunctions, ModelParams};
use kwc_core::state::{solve_state, ControlPair, SolverOptions, StateScheme, StateTrajectory, TimeGrid};
use kwc_core::KwcError;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KwcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    LineSearchFailure = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KwcScheme {
    SemiImplicit = 0,
    Implicit = 1,
}

/// Everything needed to build a problem. Use `±INFINITY` for an absent obstacle.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KwcProblemDesc {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t_final: f64,
    pub steps: usize,
    pub eps: f64,
    pub nu: f64,
    pub delta_star: f64,
    pub c1: f64,
    pub m_eta: f64,
    pub m_theta: f64,
    pub m_u: f64,
    pub m_v: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    pub scheme: KwcScheme,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KwcOptimizerOptions {
    pub tol: f64,
    pub rtol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KwcOptimizeResult {
    pub iterations: usize,
    /// 1 if the residual tolerance was met.
    pub converged: i32,
    pub cost: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
}

/// Opaque problem: grid, model, initial state, target and constraint.
pub struct KwcProblem {
    inner: ControlProblem,
}

/// Opaque state trajectory.
pub struct KwcTrajectory {
    inner: StateTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &KwcError) -> KwcStatus {
    match e {
        KwcError::CgNonConvergence { .. } | KwcError::NewtonNonConvergence { .. } | KwcError::BoundSearch(_) => {
            KwcStatus::SolverFailure
        }
        KwcError::LineSearch { .. } => KwcStatus::LineSearchFailure,
        KwcError::Io(_) => KwcStatus::Io,
        _ => KwcStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(KwcError),
}

impl From<KwcError> for Fail {
    fn from(e: KwcError) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KwcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KwcStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            KwcStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(&m);
            KwcStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            KwcStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn problem<'a>(p: *const KwcProblem) -> Result<&'a KwcProblem, Fail> {
    p.as_ref().ok_or(Fail::Null("problem"))
}

unsafe fn problem_mut<'a>(p: *mut KwcProblem) -> Result<&'a mut KwcProblem, Fail> {
    p.as_mut().ok_or(Fail::Null("problem"))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail::Arg(format!("{what}: expected {want} values, got {got}")));
    }
    Ok(())
}

fn levels(grid: Grid2D, bc: Bc, data: &[f64], steps: usize) -> Result<Vec<Field>, Fail> {
    let n = grid.n_nodes();
    data.chunks(n)
        .take(steps + 1)
        .map(|c| Field::from_values(grid, bc, c.to_vec()).map_err(Fail::Core))
        .collect()
}

/// Reads a `(steps+1)·n` control pair; a null pointer means zero.
unsafe fn control(p: &ControlProblem, u: *const f64, v: *const f64, len: usize) -> Result<ControlPair, Fail> {
    let grid = *p.eta0.grid();
    let m = p.time.steps;
    check_len(len, (m + 1) * grid.n_nodes(), "control length")?;
    let read = |x: *const f64, what| -> Result<Vec<Field>, Fail> {
        if x.is_null() {
            Ok(vec![Field::zeros(grid, Bc::Neumann); m + 1])
        } else {
            levels(grid, Bc::Neumann, slice(x, len, what)?, m)
        }
    };
    Ok(ControlPair {
        u: read(u, "u")?,
        v: read(v, "v")?,
    })
}

fn write_levels(fields: &[Field], out: &mut [f64]) {
    let n = fields[0].grid().n_nodes();
    for (chunk, f) in out.chunks_mut(n).zip(fields) {
        chunk.copy_from_slice(f.values());
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kwc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kwc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Defaults: unit square, default material preset, no obstacles,
/// implicit scheme. `nx`, `ny`, `t_final`, `steps` and `eps` still need setting.
#[no_mangle]
pub extern "C" fn kwc_problem_desc_default() -> KwcProblemDesc {
    let cg = CgOptions::default();
    KwcProblemDesc {
        nx: 0,
        ny: 0,
        lx: 1.0,
        ly: 1.0,
        t_final: 0.0,
        steps: 0,
        eps: 0.0,
        nu: 1.0,
        delta_star: 0.1,
        c1: 1.0,
        m_eta: 1.0,
        m_theta: 1.0,
        m_u: 1.0,
        m_v: 1.0,
        u_lower: f64::NEG_INFINITY,
        u_upper: f64::INFINITY,
        scheme: KwcScheme::Implicit,
        cg_tol: cg.tol,
        cg_max_iter: cg.max_iter,
    }
}

#[no_mangle]
pub extern "C" fn kwc_optimizer_default_options() -> KwcOptimizerOptions {
    let o = OptimizerOptions::default();
    KwcOptimizerOptions {
        tol: o.tol,
        rtol: o.rtol,
        max_iter: o.max_iter,
        armijo_c1: o.armijo_c1,
        backtrack: o.backtrack,
        initial_step: o.initial_step,
        max_halvings: o.max_halvings,
    }
}

fn build(d: &KwcProblemDesc) -> Result<ControlProblem, Fail> {
    let grid = Grid2D::new(d.nx, d.ny, d.lx, d.ly)?;
    let time = TimeGrid::new(d.t_final, d.steps)?;
    let mats = MaterialFunctions::linear_g_sqrt_alpha(d.delta_star, d.c1)?;
    let params = ModelParams::new(d.nu, d.eps, mats)?.with_weights(d.m_eta, d.m_theta, d.m_u, d.m_v)?;
    let mut solver = match d.scheme {
        KwcScheme::Implicit => SolverOptions::implicit(),
        KwcScheme::SemiImplicit => SolverOptions {
            scheme: StateScheme::SemiImplicit,
            ..SolverOptions::default()
        },
    };
    solver.cg = CgOptions {
        tol: d.cg_tol,
        max_iter: d.cg_max_iter,
    };
    let zero = (Field::zeros(grid, Bc::Neumann), Field::zeros(grid, Bc::DirichletZero));
    let p = ControlProblem {
        target: TargetProfile::constant_in_time(zero.0.clone(), zero.1.clone(), d.steps),
        eta0: zero.0,
        theta0: zero.1,
        constraint: BoxConstraint::scalar(d.u_lower, d.u_upper)?,
        params,
        time,
        solver,
    };
    p.validate()?;
    Ok(p)
}

/// Creates a problem with zero initial data and a zero target.
///
/// # Safety
/// `desc` must point to a valid descriptor and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn kwc_problem_new(desc: *const KwcProblemDesc, out: *mut *mut KwcProblem) -> KwcStatus {
    guard(|| {
        let d = desc.as_ref().ok_or(Fail::Null("desc"))?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let inner = build(d)?;
        *out = Box::into_raw(Box::new(KwcProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`kwc_problem_new`] and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn kwc_problem_free(p: *mut KwcProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of grid nodes, the length of one field array.
///
/// # Safety
/// `p` must be a live problem handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn kwc_problem_nodes(p: *const KwcProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.eta0.grid().n_nodes())
}

/// Sets `(η₀, θ₀)`; `θ₀` must vanish on the boundary.
///
/// # Safety
/// `eta` and `theta` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kwc_problem_set_initial(
    p: *mut KwcProblem,
    eta: *const f64,
    theta: *const f64,
    len: usize,
) -> KwcStatus {
    guard(|| {
        let p = problem_mut(p)?;
        let grid = *p.inner.eta0.grid();
        check_len(len, grid.n_nodes(), "initial data")?;
        let e = Field::from_values(grid, Bc::Neumann, slice(eta, len, "eta")?.to_vec())?;
        let t = Field::from_values(grid, Bc::DirichletZero, slice(theta, len, "theta")?.to_vec())?;
        p.inner.eta0 = e;
        p.inner.theta0 = t;
        Ok(())
    })
}

/// Sets a target that is constant in time.
///
/// # Safety
/// `eta` and `theta` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kwc_problem_set_target(
    p: *mut KwcProblem,
    eta: *const f64,
    theta: *const f64,
    len: usize,
) -> KwcStatus {
    guard(|| {
        let p = problem_mut(p)?;
        let grid = *p.inner.eta0.grid();
        check_len(len, grid.n_nodes(), "target")?;
        let e = Field::from_values(grid, Bc::Neumann, slice(eta, len, "eta")?.to_vec())?;
        let t = Field::from_values(grid, Bc::DirichletZero, slice(theta, len, "theta")?.to_vec())?;
        p.inner.target = TargetProfile::constant_in_time(e, t, p.inner.time.steps);
        Ok(())
    })
}

/// Solves the state equation for the control `(u, v)`, each `(steps+1)·nodes`
/// doubles (level 0 is ignored). Null `u` or `v` means zero.
///
/// # Safety
/// Non-null arrays must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kwc_solve(
    p: *const KwcProblem,
    u: *const f64,
    v: *const f64,
    len: usize,
    out: *mut *mut KwcTrajectory,
) -> KwcStatus {
    guard(|| {
        let p = &problem(p)?.inner;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let ctrl = control(p, u, v, len)?;
        let inner = solve_state((&p.eta0, &p.theta0), &ctrl, &p.params, p.time, &p.solver)?;
        *out = Box::into_raw(Box::new(KwcTrajectory { inner }));
        Ok(())
    })
}

/// Reduced cost and its gradient. Gradient buffers may be null to skip them.
///
/// # Safety
/// Non-null arrays must hold `len` doubles; `cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kwc_cost_gradient(
    p: *const KwcProblem,
    u: *const f64,
    v: *const f64,
    len: usize,
    cost: *mut f64,
    grad_u: *mut f64,
    grad_v: *mut f64,
) -> KwcStatus {
    guard(|| {
        let p = &problem(p)?.inner;
        let c = cost.as_mut().ok_or(Fail::Null("cost"))?;
        let ctrl = control(p, u, v, len)?;
        let ev = p.evaluate(&ctrl)?;
        *c = ev.cost;
        if !grad_u.is_null() {
            write_levels(&ev.gradient.u, slice_mut(grad_u, len, "grad_u")?);
        }
        if !grad_v.is_null() {
            write_levels(&ev.gradient.v, slice_mut(grad_v, len, "grad_v")?);
        }
        Ok(())
    })
}

/// Projected-gradient optimization starting from `(u, v)`, which are
/// overwritten with the final iterate.
///
/// # Safety
/// `u` and `v` must hold `len` doubles; `opts` and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kwc_optimize(
    p: *const KwcProblem,
    opts: *const KwcOptimizerOptions,
    u: *mut f64,
    v: *mut f64,
    len: usize,
    result: *mut KwcOptimizeResult,
) -> KwcStatus {
    guard(|| {
        let p = &problem(p)?.inner;
        let o = opts.as_ref().ok_or(Fail::Null("opts"))?;
        let r = result.as_mut().ok_or(Fail::Null("result"))?;
        if u.is_null() || v.is_null() {
            return Err(Fail::Null("u/v"));
        }
        let ctrl = control(p, u, v, len)?;
        let options = OptimizerOptions {
            tol: o.tol,
            rtol: o.rtol,
            max_iter: o.max_iter,
            armijo_c1: o.armijo_c1,
            backtrack: o.backtrack,
            initial_step: o.initial_step,
            max_halvings: o.max_halvings,
        };
        let rep = optimize(p, Some(ctrl), &options)?;
        write_levels(&rep.control.u, slice_mut(u, len, "u")?);
        write_levels(&rep.control.v, slice_mut(v, len, "v")?);
        let (r0, r1) = (rep.initial_residual(), rep.final_residual());
        *r = KwcOptimizeResult {
            iterations: rep.iterations,
            converged: i32::from(rep.converged),
            cost: *rep.cost_history.last().expect("non-empty history"),
            initial_residual: r0.0.max(r0.1),
            final_residual: r1.0.max(r1.1),
        };
        Ok(())
    })
}

/// # Safety
/// `t` must come from [`kwc_solve`] and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn kwc_trajectory_free(t: *mut KwcTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of time steps `M` (the trajectory holds `M + 1` levels).
///
/// # Safety
/// `t` must be a live trajectory handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn kwc_trajectory_steps(t: *const KwcTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.inner.steps())
}

/// Free energy at level `k`.
///
/// # Safety
/// `t` must be a live trajectory handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kwc_trajectory_energy(t: *const KwcTrajectory, k: usize, out: *mut f64) -> KwcStatus {
    guard(|| {
        let t = &t.as_ref().ok_or(Fail::Null("trajectory"))?.inner;
        let o = out.as_mut().ok_or(Fail::Null("out"))?;
        *o = *t
            .energy
            .get(k)
            .ok_or_else(|| Fail::Arg(format!("level {k} outside 0..={}", t.steps())))?;
        Ok(())
    })
}

unsafe fn copy_level(t: *const KwcTrajectory, k: usize, buf: *mut f64, len: usize, theta: bool) -> KwcStatus {
    guard(|| {
        let t = &t.as_ref().ok_or(Fail::Null("trajectory"))?.inner;
        let f = if theta { &t.theta } else { &t.eta }
            .get(k)
            .ok_or_else(|| Fail::Arg(format!("level {k} outside 0..={}", t.steps())))?;
        check_len(len, f.grid().n_nodes(), "buffer")?;
        slice_mut(buf, len, "buf")?.copy_from_slice(f.values());
        Ok(())
    })
}

/// Copies `η` at level `k` into `buf` (`len` must equal the node count).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kwc_trajectory_copy_eta(
    t: *const KwcTrajectory,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> KwcStatus {
    copy_level(t, k, buf, len, false)
}

/// Copies `θ` at level `k` into `buf` (`len` must equal the node count).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kwc_trajectory_copy_theta(
    t: *const KwcTrajectory,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> KwcStatus {
    copy_level(t, k, buf, len, true)
}
