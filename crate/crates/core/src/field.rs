//! Node-centred grid functions on a uniform rectangle and the difference
//! operators acting on them.
//!
//! Scalars live on the `nx × ny` nodes. First differences live on faces
//! (`grad`), and the negative divergence is assembled as the weighted
//! transpose of `grad`, so that
//!
//! ```text
//! <grad u, g>_faces = <u, div_neg_adjoint(g)>_nodes
//! ```
//!
//! holds to rounding for every admissible `u`. Node weights are the
//! trapezoidal ones (interior `hx·hy`, edges half, corners a quarter).
//!
//! The nonlinear orientation terms need a full 2-vector gradient at one
//! place; those live at cell centres (`cell_gradients`), four nodes per cell.

use crate::error::{KwcError, Result};
use serde::{Deserialize, Serialize};

/// Uniform rectangular node grid on `[0, lx] × [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(KwcError::InvalidGrid(format!(
                "need at least 3 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(KwcError::InvalidGrid(format!(
                "edge lengths must be positive and finite, got {lx}x{ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Unit square with `n × n` nodes.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_cells(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }
    pub fn n_xfaces(&self) -> usize {
        (self.nx - 1) * self.ny
    }
    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn is_boundary_index(&self, k: usize) -> bool {
        let (i, j) = self.coords(k);
        self.is_boundary(i, j)
    }

    /// Trapezoidal quadrature weight of node `(i, j)`.
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.hx() * self.hy()
    }

    pub fn node_weights(&self) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|k| {
                let (i, j) = self.coords(k);
                self.node_weight(i, j)
            })
            .collect()
    }

    /// Weight of the x-face between `(i, j)` and `(i+1, j)`.
    pub fn xface_weight(&self, j: usize) -> f64 {
        let w = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        w * self.hx() * self.hy()
    }

    /// Weight of the y-face between `(i, j)` and `(i, j+1)`.
    pub fn yface_weight(&self, i: usize) -> f64 {
        let w = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        w * self.hx() * self.hy()
    }

    pub fn cell_weight(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Node indices of cell `c`, ordered (i,j), (i+1,j), (i,j+1), (i+1,j+1).
    #[inline]
    pub fn cell_corners(&self, c: usize) -> [usize; 4] {
        let ci = c % (self.nx - 1);
        let cj = c / (self.nx - 1);
        let k = self.idx(ci, cj);
        [k, k + 1, k + self.nx, k + self.nx + 1]
    }

    /// Coefficients of the cell gradient with respect to the corner values,
    /// in the corner order of [`Grid2D::cell_corners`].
    #[inline]
    pub fn cell_gradient_stencil(&self) -> [[f64; 2]; 4] {
        let ax = 0.5 / self.hx();
        let ay = 0.5 / self.hy();
        [[-ax, -ay], [ax, -ay], [-ax, ay], [ax, ay]]
    }

    pub(crate) fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(KwcError::GridMismatch(format!(
                "{}x{} on {}x{} vs {}x{} on {}x{}",
                self.nx, self.ny, self.lx, self.ly, other.nx, other.ny, other.lx, other.ly
            )));
        }
        Ok(())
    }
}

/// Boundary condition attached to a grid function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bc {
    Neumann,
    DirichletZero,
}

/// Scalar grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid2D,
    values: Vec<f64>,
    bc: Bc,
}

impl Field {
    pub fn zeros(grid: Grid2D, bc: Bc) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_nodes()],
            bc,
        }
    }

    pub fn constant(grid: Grid2D, bc: Bc, c: f64) -> Self {
        let mut f = Self {
            grid,
            values: vec![c; grid.n_nodes()],
            bc,
        };
        f.enforce_bc();
        f
    }

    /// Samples `f(x, y)` at the nodes; Dirichlet boundary values are pinned to 0.
    pub fn from_fn(grid: Grid2D, bc: Bc, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.n_nodes())
            .map(|k| {
                let (i, j) = grid.coords(k);
                f(grid.x(i), grid.y(j))
            })
            .collect();
        let mut out = Self { grid, values, bc };
        out.enforce_bc();
        out
    }

    /// Validating constructor: length, finiteness and Dirichlet boundary values.
    pub fn from_values(grid: Grid2D, bc: Bc, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(KwcError::InvalidField(format!(
                "expected {} values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(KwcError::InvalidField(format!("non-finite value at node {k}")));
        }
        if bc == Bc::DirichletZero {
            for (k, v) in values.iter().enumerate() {
                if grid.is_boundary_index(k) && *v != 0.0 {
                    return Err(KwcError::InvalidField(format!(
                        "Dirichlet field has boundary value {v} at node {k}"
                    )));
                }
            }
        }
        Ok(Self { grid, values, bc })
    }

    /// Like [`Field::from_values`] but silently zeroes Dirichlet boundary nodes.
    pub(crate) fn from_raw(grid: Grid2D, bc: Bc, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        let mut f = Self { grid, values, bc };
        f.enforce_bc();
        f
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn bc(&self) -> Bc {
        self.bc
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub(crate) fn enforce_bc(&mut self) {
        if self.bc == Bc::DirichletZero {
            let g = self.grid;
            for (k, v) in self.values.iter_mut().enumerate() {
                if g.is_boundary_index(k) {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.bc, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.bc,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.bc,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }
}

/// Face-centred vector quantity: normal components on x- and y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVecField {
    grid: Grid2D,
    /// x-face `(i+½, j)` stored at `j·(nx−1) + i`.
    pub x: Vec<f64>,
    /// y-face `(i, j+½)` stored at `j·nx + i`.
    pub y: Vec<f64>,
}

impl FaceVecField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.n_xfaces()],
            y: vec![0.0; grid.n_yfaces()],
        }
    }

    pub fn new(grid: Grid2D, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.n_xfaces() || y.len() != grid.n_yfaces() {
            return Err(KwcError::InvalidField(format!(
                "face counts {}/{} do not match grid ({}/{})",
                x.len(),
                y.len(),
                grid.n_xfaces(),
                grid.n_yfaces()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(KwcError::InvalidField("non-finite face value".into()));
        }
        Ok(Self { grid, x, y })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
}

/// Face-centred first differences.
pub fn grad(f: &Field) -> FaceVecField {
    let g = *f.grid();
    let mut out = FaceVecField::zeros(g);
    grad_raw(&g, f.values(), &mut out.x, &mut out.y);
    out
}

pub(crate) fn grad_raw(g: &Grid2D, v: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx, ihy) = (1.0 / g.hx(), 1.0 / g.hy());
    for j in 0..ny {
        for i in 0..nx - 1 {
            gx[j * (nx - 1) + i] = (v[g.idx(i + 1, j)] - v[g.idx(i, j)]) * ihx;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            gy[j * nx + i] = (v[g.idx(i, j + 1)] - v[g.idx(i, j)]) * ihy;
        }
    }
}

/// Accumulates `Gᵀ W_f g` (unscaled by node weights) into `out`.
pub(crate) fn grad_transpose_weighted(g: &Grid2D, gx: &[f64], gy: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx, ihy) = (1.0 / g.hx(), 1.0 / g.hy());
    for j in 0..ny {
        let w = g.xface_weight(j) * ihx;
        for i in 0..nx - 1 {
            let q = w * gx[j * (nx - 1) + i];
            out[g.idx(i, j)] -= q;
            out[g.idx(i + 1, j)] += q;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let q = g.yface_weight(i) * ihy * gy[j * nx + i];
            out[g.idx(i, j)] -= q;
            out[g.idx(i, j + 1)] += q;
        }
    }
}

/// Negative divergence `W⁻¹ Gᵀ W_f g`, the adjoint of [`grad`] in the
/// weighted pairings. For a Dirichlet target the boundary rows are zero.
pub fn div_neg_adjoint(g: &FaceVecField, bc_of_target: Bc) -> Field {
    let grid = *g.grid();
    let mut out = vec![0.0; grid.n_nodes()];
    grad_transpose_weighted(&grid, &g.x, &g.y, &mut out);
    for (k, v) in out.iter_mut().enumerate() {
        let (i, j) = grid.coords(k);
        *v /= grid.node_weight(i, j);
    }
    Field::from_raw(grid, bc_of_target, out)
}

/// `div_neg_adjoint ∘ grad`: the five-point Laplacian (sign: positive semidefinite).
pub fn laplacian(f: &Field) -> Field {
    div_neg_adjoint(&grad(f), f.bc())
}

/// Weighted stiffness action `Gᵀ W_f G v`, accumulated into `out`.
pub(crate) fn stiffness_apply(g: &Grid2D, v: &[f64], scale: f64, out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let cx = scale / (g.hx() * g.hx());
    let cy = scale / (g.hy() * g.hy());
    for j in 0..ny {
        let w = g.xface_weight(j) * cx;
        for i in 0..nx - 1 {
            let a = g.idx(i, j);
            let q = w * (v[a + 1] - v[a]);
            out[a] -= q;
            out[a + 1] += q;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let a = g.idx(i, j);
            let q = g.yface_weight(i) * cy * (v[a + nx] - v[a]);
            out[a] -= q;
            out[a + nx] += q;
        }
    }
}

/// Diagonal of `Gᵀ W_f G`.
pub(crate) fn stiffness_diagonal(g: &Grid2D, scale: f64, out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let cx = scale / (g.hx() * g.hx());
    let cy = scale / (g.hy() * g.hy());
    for j in 0..ny {
        let w = g.xface_weight(j) * cx;
        for i in 0..nx - 1 {
            out[g.idx(i, j)] += w;
            out[g.idx(i + 1, j)] += w;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let w = g.yface_weight(i) * cy;
            out[g.idx(i, j)] += w;
            out[g.idx(i, j + 1)] += w;
        }
    }
}

/// Full 2-vector gradient at every cell centre (average of the two parallel edge differences).
pub fn cell_gradients(grid: &Grid2D, v: &[f64]) -> Vec<[f64; 2]> {
    let st = grid.cell_gradient_stencil();
    (0..grid.n_cells())
        .map(|c| {
            let k = grid.cell_corners(c);
            let mut g = [0.0; 2];
            for (corner, s) in k.iter().zip(st.iter()) {
                g[0] += s[0] * v[*corner];
                g[1] += s[1] * v[*corner];
            }
            g
        })
        .collect()
}

/// Accumulates the transpose of [`cell_gradients`] applied to `q` into `out`.
pub(crate) fn cell_gradients_transpose(grid: &Grid2D, q: &[[f64; 2]], out: &mut [f64]) {
    let st = grid.cell_gradient_stencil();
    for (c, qc) in q.iter().enumerate() {
        let k = grid.cell_corners(c);
        for (corner, s) in k.iter().zip(st.iter()) {
            out[*corner] += s[0] * qc[0] + s[1] * qc[1];
        }
    }
}

/// Mean of the four corner values of every cell.
pub fn cell_averages(grid: &Grid2D, v: &[f64]) -> Vec<f64> {
    (0..grid.n_cells())
        .map(|c| grid.cell_corners(c).iter().map(|&k| v[k]).sum::<f64>() * 0.25)
        .collect()
}

pub fn inner_h(f1: &Field, f2: &Field) -> Result<f64> {
    f1.grid().check_same(f2.grid())?;
    Ok(weighted_dot(f1.grid(), f1.values(), f2.values()))
}

pub fn norm_h(f: &Field) -> f64 {
    weighted_dot(f.grid(), f.values(), f.values()).sqrt()
}

pub fn inner_faces(g1: &FaceVecField, g2: &FaceVecField) -> Result<f64> {
    g1.grid().check_same(g2.grid())?;
    let g = *g1.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut s = 0.0;
    for j in 0..ny {
        let w = g.xface_weight(j);
        for i in 0..nx - 1 {
            let k = j * (nx - 1) + i;
            s += w * g1.x[k] * g2.x[k];
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let k = j * nx + i;
            s += g.yface_weight(i) * g1.y[k] * g2.y[k];
        }
    }
    Ok(s)
}

pub(crate) fn weighted_dot(g: &Grid2D, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let (i, j) = g.coords(k);
        s += g.node_weight(i, j) * x * y;
    }
    s
}
