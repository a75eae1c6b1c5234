//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits nonzero if any failed.
//!
//! `cargo test -p kwc-core --test acceptance`

use kwc_core::control::{inner_time, optimize, BoxConstraint, ControlProblem, OptimizerOptions, TargetProfile};
use kwc_core::experiments::{limit_diagnostics, run_constraint_continuation, run_eps_continuation, ContinuationSpec};
use kwc_core::field::{div_neg_adjoint, grad, Bc, FaceVecField, Field, Grid2D};
use kwc_core::model::{ModelParams, Regularizer};
use kwc_core::profiles::Profile;
use kwc_core::sensitivity::{
    coefficients_from_state, pairing_adjoint, pairing_forward, solve_adjoint, solve_linearized,
};
use kwc_core::linalg::CgOptions;
use kwc_core::state::{max_principle_bound, solve_state, ControlPair, SolverOptions, StateTrajectory, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

/// Every trajectory computed by the suite, with its ε, for the flux diagnostic.
#[derive(Default)]
struct Pool(Vec<(String, f64, StateTrajectory)>);

impl Pool {
    fn add(&mut self, tag: &str, eps: f64, t: &StateTrajectory) {
        self.0.push((tag.to_string(), eps, t.clone()));
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random(seed: u64, amplitude: f64) -> Profile {
    Profile::Random { seed, amplitude }
}

fn random_levels(g: Grid2D, bc: Bc, n: usize, seed: u64, amplitude: f64) -> Vec<Field> {
    (0..n)
        .map(|k| random(seed * 1000 + k as u64, amplitude).build(g, bc, 0).unwrap())
        .collect()
}

fn c1_regularizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let slack = 1e-12;
    let mut worst = [0.0f64; 4];
    let draw_y = |rng: &mut ChaCha8Rng| {
        let s = 10f64.powf(rng.gen_range(-4.0..2.0));
        [s * rng.gen_range(-1.0..1.0), s * rng.gen_range(-1.0..1.0)]
    };
    for _ in 0..10_000 {
        let e1 = if rng.gen_bool(0.05) { 0.0 } else { 10f64.powf(rng.gen_range(-3.0..1.0)) };
        let e2 = if rng.gen_bool(0.05) { 0.0 } else { 10f64.powf(rng.gen_range(-3.0..1.0)) };
        let (y1, y2) = (draw_y(&mut rng), draw_y(&mut rng));
        let (r1, r2) = (Regularizer::new(e1).map_err(e2s)?, Regularizer::new(e2).map_err(e2s)?);
        let dy = (y1[0] - y2[0]).hypot(y1[1] - y2[1]);
        let gap = (r1.value(y1) - r2.value(y2)).abs() - ((e1 - e2).abs() + dy);
        worst[0] = worst[0].max(gap);
    }
    for _ in 0..10_000 {
        let e = 10f64.powf(rng.gen_range(-3.0..1.0));
        let y = draw_y(&mut rng);
        let g = Regularizer::new(e).map_err(e2s)?.gradient(y);
        worst[1] = worst[1].max(g[0].hypot(g[1]) - 1.0);
    }
    for _ in 0..10_000 {
        let e1 = 10f64.powf(rng.gen_range(-3.0..1.0));
        let e2 = 10f64.powf(rng.gen_range(-3.0..1.0));
        let (y1, y2) = (draw_y(&mut rng), draw_y(&mut rng));
        let g1 = Regularizer::new(e1).map_err(e2s)?.gradient(y1);
        let g2 = Regularizer::new(e2).map_err(e2s)?.gradient(y2);
        let lhs = (g1[0] - g2[0]).hypot(g1[1] - g2[1]);
        let dy = (y1[0] - y2[0]).hypot(y1[1] - y2[1]);
        let rhs = 2.0 / e1.min(e2) * ((e1 - e2).abs() + dy);
        worst[2] = worst[2].max(lhs - rhs);
    }
    for _ in 0..10_000 {
        let e = 10f64.powf(rng.gen_range(-3.0..1.0));
        let y = draw_y(&mut rng);
        let h = Regularizer::new(e).map_err(e2s)?.hessian(y).map_err(e2s)?;
        let frob = (h[0][0].powi(2) + h[0][1].powi(2) + h[1][0].powi(2) + h[1][1].powi(2)).sqrt();
        // Scaled so the slack is relative to the bound 3/ε.
        worst[3] = worst[3].max(frob * e / 3.0 - 1.0);
    }
    let names = ["nonexpansive", "|grad| <= 1", "grad Lipschitz", "|hess| <= 3/eps"];
    for (n, w) in names.iter().zip(worst) {
        ensure(w <= slack, || format!("{n}: worst excess {w:e}"))?;
    }
    Ok(format!(
        "4 x 10^4 samples, worst excess {:.1e} {:.1e} {:.1e} {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn unit(g: Grid2D, bc: Bc, k: usize) -> Field {
    let mut v = vec![0.0; g.n_nodes()];
    v[k] = 1.0;
    Field::from_values(g, bc, v).unwrap()
}

fn c2_transpose(pool: &mut Pool) -> Outcome {
    let mut worst_sbp = 0.0f64;
    for (nx, ny, lx, ly) in [(3, 3, 1.0, 1.0), (4, 6, 1.0, 0.7), (5, 5, 1.3, 1.0), (8, 8, 1.0, 1.0), (7, 8, 2.0, 1.5)] {
        let g = Grid2D::new(nx, ny, lx, ly).map_err(e2s)?;
        let n = g.n_nodes();
        let (fx, fy) = (g.n_xfaces(), g.n_yfaces());
        // G: faces x nodes, column by column.
        let gcols: Vec<FaceVecField> = (0..n).map(|k| grad(&unit(g, Bc::Neumann, k))).collect();
        for f in 0..fx + fy {
            let mut face = FaceVecField::zeros(g);
            let wf = if f < fx {
                face.x[f] = 1.0;
                g.xface_weight(f / (nx - 1))
            } else {
                face.y[f - fx] = 1.0;
                g.yface_weight((f - fx) % nx)
            };
            let d = div_neg_adjoint(&face, Bc::Neumann);
            for k in 0..n {
                let (i, j) = g.coords(k);
                let w_d = g.node_weight(i, j) * d.values()[k];
                let gt = if f < fx { gcols[k].x[f] } else { gcols[k].y[f - fx] } * wf;
                worst_sbp = worst_sbp.max((w_d - gt).abs());
            }
        }
    }
    let g = Grid2D::unit_square(8).map_err(e2s)?;
    let params = ModelParams::default_preset(0.5).map_err(e2s)?;
    let time = TimeGrid::new(0.1, 4).map_err(e2s)?;
    let traj = solve_state(
        (&random(21, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?, &random(22, 1.0).build(g, Bc::DirichletZero, 0).map_err(e2s)?),
        &ControlPair::zeros(g, 4),
        &params,
        time,
        &SolverOptions::implicit(),
    )
    .map_err(e2s)?;
    pool.add("transpose", 0.5, &traj);
    let s = coefficients_from_state(&traj, &params).map_err(e2s)?;
    let mut worst_step = 0.0f64;
    for k in 0..s.steps() {
        let op = s.step_operator(k);
        let a = op.to_dense();
        let at = op.to_dense_transpose();
        for (i, row) in at.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                worst_step = worst_step.max((v - a[j][i]).abs());
            }
        }
    }
    ensure(worst_sbp <= 1e-12, || format!("W D != G^T W_f: {worst_sbp:e}"))?;
    ensure(worst_step <= 1e-12, || format!("adjoint step != forward step^T: {worst_step:e}"))?;
    Ok(format!("SBP {worst_sbp:.1e}, step transpose {worst_step:.1e} (grids up to 8x8)"))
}

fn dissipation_setup(eta_amp: f64) -> (Grid2D, Field, Field, ModelParams, TimeGrid) {
    let g = Grid2D::unit_square(16).unwrap();
    (
        g,
        random(1, eta_amp).build(g, Bc::Neumann, 0).unwrap(),
        random(2, 1.0).build(g, Bc::DirichletZero, 0).unwrap(),
        ModelParams::default_preset(0.5).unwrap(),
        TimeGrid::new(0.5, 500).unwrap(),
    )
}

fn c3_energy(pool: &mut Pool) -> Outcome {
    let (g, eta0, theta0, params, time) = dissipation_setup(1.0);
    let traj = solve_state((&eta0, &theta0), &ControlPair::zeros(g, 500), &params, time, &SolverOptions::default())
        .map_err(e2s)?;
    pool.add("energy", 0.5, &traj);
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0;
    for (k, w) in traj.energy.windows(2).enumerate() {
        let excess = (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE);
        if excess > worst {
            worst = excess;
            at = k + 1;
        }
    }
    ensure(worst <= 1e-8, || format!("energy rises by {worst:e} (relative) at step {at}"))?;
    Ok(format!(
        "E: {:.6} -> {:.6} over 500 steps, largest relative change {worst:.1e}",
        traj.energy[0],
        traj.energy[500]
    ))
}

fn c4_max_principle(pool: &mut Pool) -> Outcome {
    let (g, eta0, theta0, params, time) = dissipation_setup(2.0);
    let u = random(3, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?;
    let v = random(4, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?;
    let ctrl = ControlPair::constant_in_time(u, v, 500);
    let bound = max_principle_bound(&eta0, &ctrl.u, &params).map_err(e2s)?;
    let traj = solve_state((&eta0, &theta0), &ctrl, &params, time, &SolverOptions::default()).map_err(e2s)?;
    pool.add("max-principle", 0.5, &traj);
    let m = traj.max_abs_eta();
    ensure(m <= 2.0 + 1e-8, || format!("max |eta_k| = {m:.12}"))?;
    Ok(format!(
        "|eta0| = {:.3}, M_u|u| = {:.3}, max |eta_k| = {m:.6}, computed bound {bound:.3}",
        eta0.max_abs(),
        ctrl.u[1].max_abs()
    ))
}

fn c5_conjugacy(pool: &mut Pool) -> Outcome {
    let g = Grid2D::unit_square(8).map_err(e2s)?;
    let m = 8;
    let params = ModelParams::default_preset(0.5).map_err(e2s)?;
    let time = TimeGrid::new(0.2, m).map_err(e2s)?;
    let ctrl = ControlPair {
        u: random_levels(g, Bc::Neumann, m + 1, 31, 1.0),
        v: random_levels(g, Bc::Neumann, m + 1, 32, 1.0),
    };
    let eta0 = random(33, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?;
    let theta0 = random(34, 1.0).build(g, Bc::DirichletZero, 0).map_err(e2s)?;
    let traj = solve_state((&eta0, &theta0), &ctrl, &params, time, &SolverOptions::implicit()).map_err(e2s)?;
    pool.add("conjugacy", 0.5, &traj);
    let s = coefficients_from_state(&traj, &params).map_err(e2s)?;
    let cg = CgOptions { tol: 1e-13, max_iter: 5000 };
    let zero = (Field::zeros(g, Bc::Neumann), Field::zeros(g, Bc::DirichletZero));
    let mut worst = 0.0f64;
    for pair in 0..5u64 {
        let fp = random_levels(g, Bc::Neumann, m + 1, 100 + pair, 1.0);
        let fz = random_levels(g, Bc::DirichletZero, m + 1, 200 + pair, 1.0);
        let hp = random_levels(g, Bc::Neumann, m + 1, 300 + pair, 1.0);
        let hz = random_levels(g, Bc::DirichletZero, m + 1, 400 + pair, 1.0);
        let lin = solve_linearized(&s, (&zero.0, &zero.1), &hp, &hz, cg).map_err(e2s)?;
        let adj = solve_adjoint(&s, &fp, &fz, cg).map_err(e2s)?;
        let lhs = pairing_adjoint(s.tau(), (&adj.p, &adj.z), (&hp, &hz));
        let rhs = pairing_forward(s.tau(), (&fp, &fz), (&lin.p, &lin.z));
        let nf = pairing_forward(s.tau(), (&fp, &fz), (&fp, &fz)).sqrt();
        let nh = pairing_forward(s.tau(), (&hp, &hz), (&hp, &hz)).sqrt();
        worst = worst.max((lhs - rhs).abs() / (nf * nh));
    }
    ensure(worst <= 1e-8, || format!("pairing mismatch {worst:e} x |f||h|"))?;
    Ok(format!("5 pairs, worst |<P*f,h> - <f,Ph>| / (|f||h|) = {worst:.1e}"))
}

fn c6_gradient(pool: &mut Pool) -> Outcome {
    let g = Grid2D::unit_square(8).map_err(e2s)?;
    let m = 10;
    let params = ModelParams::default_preset(0.5).map_err(e2s)?;
    let time = TimeGrid::new(0.2, m).map_err(e2s)?;
    let problem = ControlProblem {
        eta0: random(41, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?,
        theta0: random(42, 1.0).build(g, Bc::DirichletZero, 0).map_err(e2s)?,
        target: TargetProfile::constant_in_time(
            random(43, 0.5).build(g, Bc::Neumann, 0).map_err(e2s)?,
            random(44, 0.5).build(g, Bc::DirichletZero, 0).map_err(e2s)?,
            m,
        ),
        constraint: BoxConstraint::unbounded(),
        params,
        time,
        solver: SolverOptions::implicit(),
    };
    let ctrl = ControlPair {
        u: random_levels(g, Bc::Neumann, m + 1, 45, 1.0),
        v: random_levels(g, Bc::Neumann, m + 1, 46, 1.0),
    };
    let ev = problem.evaluate(&ctrl).map_err(e2s)?;
    pool.add("gradient", 0.5, &ev.state);
    let delta = 1e-4;
    let mut worst = 0.0f64;
    for d in 0..5u64 {
        let dir = ControlPair {
            u: random_levels(g, Bc::Neumann, m + 1, 500 + d, 1.0),
            v: random_levels(g, Bc::Neumann, m + 1, 600 + d, 1.0),
        };
        let analytic = inner_time(time.tau(), &ev.gradient.u, &dir.u) + inner_time(time.tau(), &ev.gradient.v, &dir.v);
        let jp = problem.cost(&ctrl.axpy(delta, &dir).map_err(e2s)?).map_err(e2s)?;
        let jm = problem.cost(&ctrl.axpy(-delta, &dir).map_err(e2s)?).map_err(e2s)?;
        let fd = (jp - jm) / (2.0 * delta);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-12));
    }
    ensure(worst <= 1e-3, || format!("relative error {worst:e}"))?;
    Ok(format!("5 directions, delta = 1e-4, worst relative error {worst:.1e}"))
}

fn c7_optimality(pool: &mut Pool) -> Outcome {
    let g = Grid2D::unit_square(16).map_err(e2s)?;
    let m = 20;
    let params = ModelParams::default_preset(0.5)
        .and_then(|p| p.with_weights(200.0, 200.0, 1.0, 1.0))
        .map_err(e2s)?;
    let time = TimeGrid::new(1.0, m).map_err(e2s)?;
    let eta0 = Field::from_fn(g, Bc::Neumann, |x, y| 0.5 * (PI * x).cos() * (PI * y).cos());
    let theta0 = Field::from_fn(g, Bc::DirichletZero, |x, y| (PI * x).sin() * (PI * y).sin());
    let solver = SolverOptions::implicit();
    let u_star = Field::from_fn(g, Bc::Neumann, |x, y| 3.0 * (PI * x).cos() * (PI * y / 2.0).sin());
    let v_star = Field::from_fn(g, Bc::Neumann, |x, y| 3.0 * (2.0 * PI * x).sin() * (PI * y).sin());
    let reach = solve_state((&eta0, &theta0), &ControlPair::constant_in_time(u_star, v_star, m), &params, time, &solver)
        .map_err(e2s)?;
    let problem = ControlProblem {
        eta0,
        theta0,
        target: TargetProfile::from_trajectory(&reach),
        constraint: BoxConstraint::scalar(-1.0, 1.0).map_err(e2s)?,
        params,
        time,
        solver,
    };
    let opts = OptimizerOptions {
        tol: 0.0,
        rtol: 1e-7,
        max_iter: 200,
        ..OptimizerOptions::default()
    };
    let rep = optimize(&problem, None, &opts).map_err(e2s)?;
    pool.add("optimality", 0.5, &rep.state);
    let r0 = rep.initial_residual();
    let r = rep.final_residual();
    let (r0, r) = (r0.0.max(r0.1), r.0.max(r.1));
    let mut dev = 0.0f64;
    let mut active = 0usize;
    let mut total = 0usize;
    for k in 1..=m {
        for (u, p) in rep.control.u[k].values().iter().zip(rep.adjoint.p[k - 1].values()) {
            let c = (-p).clamp(-1.0, 1.0);
            dev = dev.max((u - c).abs());
            active += usize::from(p.abs() >= 1.0);
            total += 1;
        }
    }
    ensure(rep.iterations <= 200, || format!("{} iterates", rep.iterations))?;
    ensure(r <= 1e-4 * r0, || format!("residual {r:e} vs initial {r0:e} after {} iterates", rep.iterations))?;
    ensure(active > 0 && active < total, || format!("constraint active on {active} of {total} samples"))?;
    ensure(dev <= 1e-6, || format!("|u - clamp(-p)| = {dev:e}"))?;
    Ok(format!(
        "{} iterates ({:?}), residual {r0:.3e} -> {r:.2e}, active {active}/{total}, |u - clamp(-p)| = {dev:.1e}",
        rep.iterations, rep.termination
    ))
}

fn c8_eps_continuation(pool: &mut Pool) -> Outcome {
    let g = Grid2D::unit_square(16).map_err(e2s)?;
    let time = TimeGrid::new(0.2, 200).map_err(e2s)?;
    let spec = ContinuationSpec::harmonic(
        0.5,
        &[1, 2, 4, 8],
        random(1, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?,
        random(2, 1.0).build(g, Bc::DirichletZero, 0).map_err(e2s)?,
        ControlPair::constant_in_time(
            random(3, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?,
            random(4, 1.0).build(g, Bc::Neumann, 0).map_err(e2s)?,
            200,
        ),
        ModelParams::default_preset(0.5).map_err(e2s)?,
        time,
        SolverOptions::default(),
    )
    .map_err(e2s)?;
    let (table, trajs) = run_eps_continuation(&spec).map_err(e2s)?;
    for (e, t) in spec.eps_sequence.iter().zip(&trajs) {
        pool.add("eps-continuation", *e, t);
    }
    let d: Vec<f64> = table.rows.iter().map(|r| r.dist_state).collect();
    ensure(d.windows(2).all(|w| w[1] < w[0]), || format!("distances not strictly decreasing: {d:?}"))?;
    Ok(format!(
        "sup-time distances for n = 1, 2, 4, 8: {}",
        d.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
    ))
}

fn c9_constraint_continuation() -> Outcome {
    let g = Grid2D::unit_square(16).map_err(e2s)?;
    let u = vec![Field::from_fn(g, Bc::Neumann, |x, y| 10.0 * (PI * x).cos() * (PI * y).cos()); 21];
    ensure(u[0].max_abs() == 10.0, || format!("|u| = {}", u[0].max_abs()))?;
    let ns = [1.0, 2.0, 3.0, 5.0, 8.0, 9.0, 9.99, 10.0, 11.0, 20.0, 100.0];
    let rows = run_constraint_continuation(&BoxConstraint::unbounded(), &u, &ns, 0.05).map_err(e2s)?;
    let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    ensure(d.windows(2).all(|w| w[1] <= w[0]), || format!("distances increase: {d:?}"))?;
    ensure(rows.iter().filter(|r| r.n >= 10.0).all(|r| r.distance == 0.0), || {
        format!("nonzero distance for n >= 10: {d:?}")
    })?;
    ensure(rows.iter().filter(|r| r.n < 10.0).all(|r| r.distance > 0.0), || {
        format!("zero distance for n < 10: {d:?}")
    })?;
    Ok(format!("n = 1 .. 100, distance {:.3e} -> 0, exactly 0 from n = 10", d[0]))
}

fn c10_flux(pool: &Pool) -> Outcome {
    ensure(!pool.0.is_empty(), || "no trajectories were computed".into())?;
    let mut worst = 0.0f64;
    for (tag, eps, t) in &pool.0 {
        let d = limit_diagnostics(*eps, t, 1e-2).map_err(e2s)?;
        ensure(d.sup_flux <= 1.0 + 1e-12, || format!("{tag} (eps {eps}): sup flux {}", d.sup_flux))?;
        worst = worst.max(d.sup_flux);
    }
    Ok(format!("{} trajectories, largest flux {worst:.6}", pool.0.len()))
}

fn run_cli(dir: &Path, mode: &str, config: &Path, out: &str) -> Result<(), String> {
    let st = Command::new(env!("CARGO_BIN_EXE_kwc"))
        .args([mode, "--config"])
        .arg(config)
        .arg("--out")
        .arg(dir.join(out))
        .args(["--seed", "17"])
        .output()
        .map_err(e2s)?;
    ensure(st.status.success(), || {
        format!("kwc {mode} failed: {}", String::from_utf8_lossy(&st.stderr))
    })
}

fn c11_cli() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let dir = tmp.path();
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "[grid]\nnx = 12\nny = 12\n[time]\nt_final = 0.1\nsteps = 20\n[model]\neps = 0.5\n\
         [initial]\neta = \"random(1, 1.0)\"\ntheta = \"random(2, 1.0)\"\n\
         [control]\nu = \"random(3, 0.5)\"\nv = \"stripe(2)\"\n\
         [target]\nsource = \"from-control\"\nu = \"random(5, 1.0)\"\n\
         [optimizer]\nmax_iter = 5\n[output]\nvtk_stride = 10\n[continuation]\nns = [1, 2]\n",
    )
    .map_err(e2s)?;
    let mut compared = 0;
    for mode in ["solve", "optimize", "eps-continuation"] {
        run_cli(dir, mode, &cfg, &format!("{mode}-a"))?;
        run_cli(dir, mode, &cfg, &format!("{mode}-b"))?;
        let mut names: Vec<String> = std::fs::read_dir(dir.join(format!("{mode}-a")))
            .map_err(e2s)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        ensure(!names.is_empty(), || format!("{mode}: no CSV output"))?;
        for n in names {
            let a = std::fs::read(dir.join(format!("{mode}-a")).join(&n)).map_err(e2s)?;
            let b = std::fs::read(dir.join(format!("{mode}-b")).join(&n)).map_err(e2s)?;
            ensure(a == b, || format!("{mode}/{n} differs between runs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} CSV files byte-identical across two runs (solve, optimize, eps-continuation)"))
}

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn check(&mut self, id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        let el = t.elapsed();
        let res = match (res, budget) {
            (Ok(_), Some(b)) if el > b => Err(format!("took {:.1} s, budget {:.0} s", el.as_secs_f64(), b.as_secs_f64())),
            (r, _) => r,
        };
        let budget = budget.map_or("amortized".to_string(), |b| format!("< {} s", b.as_secs()));
        match res {
            Ok(msg) => println!("PASS [{id:>2}] {name} ({:.2} s, {budget}): {msg}", el.as_secs_f64()),
            Err(msg) => {
                println!("FAIL [{id:>2}] {name} ({:.2} s, {budget}): {msg}", el.as_secs_f64());
                self.failed.push(id);
            }
        }
    }
}

fn main() {
    let secs = Duration::from_secs;
    let mut pool = Pool::default();
    let mut r = Report { failed: Vec::new() };
    r.check(1, "regularizer bounds", Some(secs(1)), c1_regularizer);
    r.check(2, "summation by parts and step transpose", Some(secs(5)), || c2_transpose(&mut pool));
    r.check(3, "energy dissipation", Some(secs(10)), || c3_energy(&mut pool));
    r.check(4, "maximum principle", Some(secs(10)), || c4_max_principle(&mut pool));
    r.check(5, "linearized/adjoint conjugacy", Some(secs(5)), || c5_conjugacy(&mut pool));
    r.check(6, "adjoint gradient vs finite differences", Some(secs(30)), || c6_gradient(&mut pool));
    r.check(7, "optimality conditions", Some(secs(300)), || c7_optimality(&mut pool));
    r.check(8, "eps continuation", Some(secs(120)), || c8_eps_continuation(&mut pool));
    r.check(9, "constraint continuation", Some(secs(1)), c9_constraint_continuation);
    r.check(10, "limiting flux diagnostic", None, || c10_flux(&pool));
    r.check(11, "CLI determinism", Some(secs(30)), c11_cli);
    if r.failed.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", r.failed);
        std::process::exit(1);
    }
}
