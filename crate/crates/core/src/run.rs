//! Runs one configured mode and writes its artifacts.
//!
//! Every run writes `manifest.json` (version, mode, seed, effective config,
//! file list and headline metrics) and `config.toml` (the effective config,
//! reloadable as is). Mode outputs:
//!
//! | mode                      | files                                                             |
//! |---------------------------|-------------------------------------------------------------------|
//! | `solve`                   | `trajectory.csv`, VTK snapshots                                   |
//! | `optimize`                | `optimization.csv`, `trajectory.csv`, `control_u.csv`, `control_v.csv`, VTK snapshots |
//! | `eps-continuation`        | `eps_continuation.csv`, `diagnostics.csv`                         |
//! | `constraint-continuation` | `constraint_continuation.csv`                                     |
//! | `diagnostics`             | `diagnostics.csv`                                                 |

use crate::config::{Mode, RunConfig, TargetSource};
use crate::control::{optimize, ControlProblem, TargetProfile};
use crate::error::{KwcError, Result};
use crate::experiments::{
    limit_diagnostics, run_constraint_continuation, run_eps_continuation, ConstraintRow, ContinuationSpec,
    ConvergenceTable, DiagnosticsRow,
};
use crate::field::{Bc, Field, Grid2D};
use crate::io::{write_field_csv, write_table_csv, write_trajectory_csv, write_trajectory_vtk, write_vtk};
use crate::state::{max_principle_bound, solve_state, ControlPair};
use serde_json::{json, Map, Value};
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
    pub metrics: Map<String, Value>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    grid: Grid2D,
    files: Vec<String>,
    metrics: Map<String, Value>,
}

impl Ctx<'_> {
    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        write_table_csv(&self.out.join(name), header, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn metric(&mut self, k: &str, v: impl Into<Value>) {
        self.metrics.insert(k.to_string(), v.into());
    }

    fn initial(&self) -> Result<(Field, Field)> {
        let seed = self.cfg.seed;
        Ok((
            self.cfg.initial.eta.build(self.grid, Bc::Neumann, seed)?,
            self.cfg.initial.theta.build(self.grid, Bc::DirichletZero, seed)?,
        ))
    }

    fn control(&self) -> Result<ControlPair> {
        let seed = self.cfg.seed;
        Ok(ControlPair::constant_in_time(
            self.cfg.control.u.build(self.grid, Bc::Neumann, seed)?,
            self.cfg.control.v.build(self.grid, Bc::Neumann, seed)?,
            self.cfg.time.steps,
        ))
    }

    fn list_dir(&mut self, prefix: &[&str]) -> Result<()> {
        let mut names: Vec<String> = std::fs::read_dir(self.out)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".vtk") && prefix.iter().any(|p| n.starts_with(p)))
            .collect();
        names.sort();
        self.files.extend(names);
        Ok(())
    }

    fn continuation_spec(&self) -> Result<ContinuationSpec> {
        let (eta0, theta0) = self.initial()?;
        let cfg = self.cfg;
        ContinuationSpec::harmonic(
            cfg.continuation.eps_ref.unwrap_or(cfg.model.eps),
            &cfg.continuation.ns,
            eta0,
            theta0,
            self.control()?,
            cfg.params()?,
            cfg.time()?,
            cfg.solver_options()?,
        )
    }
}

fn solve_mode(c: &mut Ctx) -> Result<()> {
    let (eta0, theta0) = c.initial()?;
    let ctrl = c.control()?;
    let params = c.cfg.params()?;
    let traj = solve_state((&eta0, &theta0), &ctrl, &params, c.cfg.time()?, &c.cfg.solver_options()?)?;
    write_trajectory_csv(&c.out.join("trajectory.csv"), &traj)?;
    c.files.push("trajectory.csv".into());
    write_trajectory_vtk(c.out, &traj, c.cfg.output.vtk_stride)?;
    c.list_dir(&["eta_", "theta_"])?;
    let rises = traj.energy.windows(2).filter(|w| w[1] > w[0]).count();
    c.metric("energy_initial", traj.energy[0]);
    c.metric("energy_final", *traj.energy.last().expect("non-empty"));
    c.metric("energy_increases", rises);
    c.metric("eta_max_abs", traj.max_abs_eta());
    c.metric("max_principle_bound", max_principle_bound(&eta0, &ctrl.u, &params)?);
    Ok(())
}

fn optimize_mode(c: &mut Ctx) -> Result<()> {
    let cfg = c.cfg;
    let (eta0, theta0) = c.initial()?;
    let params = cfg.params()?;
    let time = cfg.time()?;
    let solver = cfg.solver_options()?;
    let t = &cfg.target;
    let target = match t.source {
        TargetSource::Profile => TargetProfile::constant_in_time(
            t.eta.build(c.grid, Bc::Neumann, cfg.seed)?,
            t.theta.build(c.grid, Bc::DirichletZero, cfg.seed)?,
            time.steps,
        ),
        TargetSource::FromControl => {
            let ctrl = ControlPair::constant_in_time(
                t.u.build(c.grid, Bc::Neumann, cfg.seed)?,
                t.v.build(c.grid, Bc::Neumann, cfg.seed)?,
                time.steps,
            );
            TargetProfile::from_trajectory(&solve_state((&eta0, &theta0), &ctrl, &params, time, &solver)?)
        }
    };
    let problem = ControlProblem {
        eta0,
        theta0,
        target,
        constraint: cfg.constraint()?,
        params,
        time,
        solver,
    };
    let report = optimize(&problem, Some(c.control()?), &cfg.optimizer)?;
    let rows: Vec<Vec<f64>> = (0..report.cost_history.len())
        .map(|i| {
            let (ru, rv) = report.residual_history[i];
            vec![i as f64, report.cost_history[i], ru, rv, report.step_history[i]]
        })
        .collect();
    c.table("optimization.csv", &["iterate", "cost", "r_u", "r_v", "step"], &rows)?;
    write_trajectory_csv(&c.out.join("trajectory.csv"), &report.state)?;
    c.files.push("trajectory.csv".into());
    let last = time.steps;
    write_field_csv(&c.out.join("control_u.csv"), &report.control.u[last])?;
    write_field_csv(&c.out.join("control_v.csv"), &report.control.v[last])?;
    c.files.extend(["control_u.csv".into(), "control_v.csv".into()]);
    let stride = cfg.output.vtk_stride;
    if stride > 0 {
        write_trajectory_vtk(c.out, &report.state, stride)?;
        for k in (1..=last).filter(|k| k % stride == 0 || *k == last) {
            write_vtk(&c.out.join(format!("u_{k:05}.vtk")), &report.control.u[k], "u")?;
            write_vtk(&c.out.join(format!("v_{k:05}.vtk")), &report.control.v[k], "v")?;
        }
        c.list_dir(&["eta_", "theta_", "u_", "v_"])?;
    }
    let (r0, r) = (report.initial_residual(), report.final_residual());
    c.metric("iterations", report.iterations);
    c.metric("termination", serde_json::to_value(report.termination).expect("enum serializes"));
    c.metric("converged", report.converged);
    c.metric("cost_initial", report.cost_history[0]);
    c.metric("cost_final", *report.cost_history.last().expect("non-empty"));
    c.metric("residual_initial", r0.0.max(r0.1));
    c.metric("residual_final", r.0.max(r.1));
    Ok(())
}

fn diagnostics_rows(c: &Ctx, spec: &ContinuationSpec, trajs: &[crate::state::StateTrajectory]) -> Result<Vec<DiagnosticsRow>> {
    spec.eps_sequence
        .iter()
        .zip(trajs)
        .map(|(e, t)| limit_diagnostics(*e, t, c.cfg.continuation.membership_tol))
        .collect()
}

fn eps_mode(c: &mut Ctx, write_table: bool) -> Result<()> {
    let spec = c.continuation_spec()?;
    let (table, trajs): (ConvergenceTable, _) = run_eps_continuation(&spec)?;
    let diag = diagnostics_rows(c, &spec, &trajs)?;
    if write_table {
        c.table("eps_continuation.csv", &ConvergenceTable::HEADER, &table.to_rows())?;
        let d: Vec<f64> = table.rows.iter().map(|r| r.dist_state).collect();
        c.metric("eps_ref", table.eps_ref);
        c.metric("distances_decreasing", d.windows(2).all(|w| w[1] < w[0]));
    }
    let rows: Vec<Vec<f64>> = diag.iter().map(DiagnosticsRow::to_row).collect();
    c.table("diagnostics.csv", &DiagnosticsRow::HEADER, &rows)?;
    c.metric("sup_flux_max", diag.iter().fold(0.0f64, |m, r| m.max(r.sup_flux)));
    Ok(())
}

fn constraint_mode(c: &mut Ctx) -> Result<()> {
    let k = c.cfg.constraint()?;
    let u = c.control()?.u;
    let tau = c.cfg.time()?.tau();
    let rows = run_constraint_continuation(&k, &u, &c.cfg.continuation.truncations, tau)?;
    let table: Vec<Vec<f64>> = rows.iter().map(ConstraintRow::to_row).collect();
    c.table("constraint_continuation.csv", &ConstraintRow::HEADER, &table)?;
    c.metric("distance_final", rows.last().map_or(0.0, |r| r.distance));
    Ok(())
}

/// Runs `cfg` (whose `mode` must be set) and writes everything under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let mode = cfg.mode()?;
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut c = Ctx {
        cfg,
        out,
        grid: cfg.grid()?,
        files: Vec::new(),
        metrics: Map::new(),
    };
    match mode {
        Mode::Solve => solve_mode(&mut c)?,
        Mode::Optimize => optimize_mode(&mut c)?,
        Mode::EpsContinuation => eps_mode(&mut c, true)?,
        Mode::ConstraintContinuation => constraint_mode(&mut c)?,
        Mode::Diagnostics => eps_mode(&mut c, false)?,
    }
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    c.files.push("config.toml".into());
    c.files.push("manifest.json".into());
    let manifest = json!({
        "program": "kwc",
        "version": VERSION,
        "mode": mode.as_str(),
        "seed": cfg.seed,
        "config": serde_json::to_value(cfg).map_err(|e| KwcError::Io(e.to_string()))?,
        "files": c.files,
        "metrics": c.metrics,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunSummary {
        mode,
        files: c.files,
        metrics: c.metrics,
    })
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| KwcError::Io(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

/// `error.json` body for a failed run.
pub fn error_json(mode: Option<Mode>, e: &KwcError) -> Value {
    json!({
        "program": "kwc",
        "version": VERSION,
        "mode": mode.map(|m| m.as_str()),
        "error": e.kind(),
        "message": e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: &str, extra: &str) -> RunConfig {
        let text = format!(
            "mode = \"{mode}\"\n[grid]\nnx = 6\nny = 6\n[time]\nt_final = 0.05\nsteps = 5\n[model]\neps = 0.5\n{extra}"
        );
        RunConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn solve_writes_manifest_and_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("solve", "[initial]\neta = \"stripe(1)\"\ntheta = \"vortex\"\n[output]\nvtk_stride = 2\n");
        let s = run(&c, dir.path()).unwrap();
        assert!(s.files.contains(&"trajectory.csv".to_string()));
        assert!(s.files.contains(&"eta_00004.vtk".to_string()));
        assert!(s.files.contains(&"theta_00005.vtk".to_string()));
        for f in &s.files {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["mode"], "solve");
        assert_eq!(m["metrics"]["energy_increases"], 0);
        let back = RunConfig::from_toml_str(&std::fs::read_to_string(dir.path().join("config.toml")).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn constraint_continuation_runs_with_zero_eps() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg("constraint-continuation", "[control]\nu = \"constant(3.0)\"\n");
        c.model.eps = 0.0;
        let s = run(&c, dir.path()).unwrap();
        assert_eq!(s.metrics["distance_final"], 0.0);
    }

    #[test]
    fn missing_mode_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg("solve", "");
        c.mode = None;
        assert_eq!(run(&c, dir.path()).unwrap_err().kind(), "config");
    }
}
