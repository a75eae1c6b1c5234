//! Field and table output: legacy VTK structured points and CSV.

use crate::error::{KwcError, Result};
use crate::field::{norm_h, Bc, Field, Grid2D};
use crate::state::StateTrajectory;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Full-precision scientific formatting used for every numeric output.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> KwcError {
    KwcError::Io(e.to_string())
}

/// One scalar field as ASCII `STRUCTURED_POINTS`.
pub fn write_vtk(path: &Path, field: &Field, name: &str) -> Result<()> {
    let g = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", g.nx(), g.ny())?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {} {} 1", fmt_num(g.hx()), fmt_num(g.hy()))?;
    writeln!(w, "POINT_DATA {}", g.n_nodes())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in field.values() {
        writeln!(w, "{}", fmt_num(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `i, j, x, y, value`.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let g = field.grid();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["i", "j", "x", "y", "value"]).map_err(csv_err)?;
    for (k, v) in field.values().iter().enumerate() {
        let (i, j) = g.coords(k);
        w.write_record([
            i.to_string(),
            j.to_string(),
            fmt_num(g.x(i)),
            fmt_num(g.y(j)),
            fmt_num(*v),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_field_csv`]. Every node must appear exactly once.
pub fn read_field_csv(path: &Path, grid: Grid2D, bc: Bc) -> Result<Field> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut values = vec![f64::NAN; grid.n_nodes()];
    let mut seen = vec![false; grid.n_nodes()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| KwcError::Io(format!("{}: row {}: {what}", path.display(), line + 2));
        if rec.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let i: usize = rec[0].trim().parse().map_err(|_| bad("bad i"))?;
        let j: usize = rec[1].trim().parse().map_err(|_| bad("bad j"))?;
        let v: f64 = rec[4].trim().parse().map_err(|_| bad("bad value"))?;
        if i >= grid.nx() || j >= grid.ny() {
            return Err(bad("node outside the grid"));
        }
        let k = grid.idx(i, j);
        if seen[k] {
            return Err(bad("duplicate node"));
        }
        seen[k] = true;
        values[k] = v;
    }
    if seen.iter().any(|s| !s) {
        return Err(KwcError::Io(format!("{}: missing nodes", path.display())));
    }
    Field::from_values(grid, bc, values)
}

/// Generic numeric table with a header row.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt_num(*x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const TRAJECTORY_HEADER: [&str; 7] = [
    "k",
    "t",
    "energy",
    "eta_max_abs",
    "theta_max_abs",
    "eta_norm_h",
    "theta_norm_h",
];

/// Per-step summary of a trajectory.
pub fn trajectory_rows(t: &StateTrajectory) -> Vec<Vec<f64>> {
    (0..t.times.len())
        .map(|k| {
            vec![
                k as f64,
                t.times[k],
                t.energy[k],
                t.eta[k].max_abs(),
                t.theta[k].max_abs(),
                norm_h(&t.eta[k]),
                norm_h(&t.theta[k]),
            ]
        })
        .collect()
}

pub fn write_trajectory_csv(path: &Path, t: &StateTrajectory) -> Result<()> {
    write_table_csv(path, &TRAJECTORY_HEADER, &trajectory_rows(t))
}

/// VTK snapshots `eta_00005.vtk`, `theta_00005.vtk` every `stride` steps
/// (and at the final step). `stride = 0` writes nothing.
pub fn write_trajectory_vtk(dir: &Path, t: &StateTrajectory, stride: usize) -> Result<()> {
    if stride == 0 {
        return Ok(());
    }
    let last = t.times.len() - 1;
    for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
        write_vtk(&dir.join(format!("eta_{k:05}.vtk")), &t.eta[k], "eta")?;
        write_vtk(&dir.join(format!("theta_{k:05}.vtk")), &t.theta[k], "theta")?;
    }
    Ok(())
}
