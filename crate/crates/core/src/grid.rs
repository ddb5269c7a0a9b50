//! Uniform tensor grids on boxes, nodal grid functions and trapezoidal quadrature.
//!
//! Nodes are numbered lexicographically with the first axis running fastest,
//! so in 2D node `k = j * (nx + 1) + i` sits at `(x_i, y_j)`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub cells: usize,
}

impl<T: Real> Axis<T> {
    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.cells)
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn coord(&self, i: usize) -> T {
        if i == self.cells {
            self.hi
        } else {
            self.lo + self.spacing() * T::from_usize_lossy(i)
        }
    }
}

/// Structured grid on `[a_1, b_1] (x [a_2, b_2])`.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    axes: Vec<Axis<T>>,
    weights: Vec<T>,
    boundary: Vec<bool>,
    interior: Vec<usize>,
    interior_slot: Vec<Option<usize>>,
}

impl<T: PartialEq> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes
    }
}

impl<T: Real> Grid<T> {
    /// Builds a grid from per-axis intervals and cell counts.
    pub fn new(extent: &[(T, T)], n_cells: &[usize]) -> Result<Arc<Self>> {
        if extent.is_empty() || extent.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                extent.len()
            )));
        }
        if extent.len() != n_cells.len() {
            return Err(Error::InvalidGrid(
                "extent and cell counts have different lengths".into(),
            ));
        }
        let mut axes = Vec::with_capacity(extent.len());
        for (axis, (&(lo, hi), &cells)) in extent.iter().zip(n_cells).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: interval [{lo}, {hi}] is degenerate"
                )));
            }
            if cells < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: need at least 2 cells, got {cells}"
                )));
            }
            axes.push(Axis { lo, hi, cells });
        }

        let per_axis_weights: Vec<Vec<T>> = axes
            .iter()
            .map(|a| {
                let h = a.spacing();
                let half = h / T::lit(2.0);
                (0..a.nodes())
                    .map(|i| if i == 0 || i == a.cells { half } else { h })
                    .collect()
            })
            .collect();

        let count: usize = axes.iter().map(Axis::nodes).product();
        let mut weights = Vec::with_capacity(count);
        let mut boundary = Vec::with_capacity(count);
        let nx = axes[0].nodes();
        for k in 0..count {
            let i = k % nx;
            let on_x = i == 0 || i == axes[0].cells;
            let mut w = per_axis_weights[0][i];
            let mut on_b = on_x;
            if axes.len() == 2 {
                let j = k / nx;
                w = w * per_axis_weights[1][j];
                on_b = on_b || j == 0 || j == axes[1].cells;
            }
            weights.push(w);
            boundary.push(on_b);
        }
        let mut interior = Vec::new();
        let mut interior_slot = vec![None; count];
        for k in 0..count {
            if !boundary[k] {
                interior_slot[k] = Some(interior.len());
                interior.push(k);
            }
        }
        Ok(Arc::new(Grid {
            axes,
            weights,
            boundary,
            interior,
            interior_slot,
        }))
    }

    /// Unit interval `[0, 1]` with `n` cells.
    pub fn unit_interval(n: usize) -> Result<Arc<Self>> {
        Self::new(&[(T::zero(), T::one())], &[n])
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Arc<Self>> {
        Self::new(&[(T::zero(), T::one()), (T::zero(), T::one())], &[n, n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn max_spacing(&self) -> T {
        self.axes.iter().map(Axis::spacing).fold(T::zero(), |a, b| a.max(b))
    }

    /// Trapezoidal quadrature weight of every node.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    /// Node indices not on the Dirichlet boundary, in increasing order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Position of node `k` in [`Grid::interior`], if it is interior.
    pub fn interior_slot(&self, k: usize) -> Option<usize> {
        self.interior_slot[k]
    }

    /// `(i, j)` lattice index of node `k` (`j = 0` in 1D).
    pub fn lattice(&self, k: usize) -> (usize, usize) {
        let nx = self.axes[0].nodes();
        (k % nx, k / nx)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i + j * self.axes[0].nodes()
    }

    /// Coordinates of node `k`; the second entry is zero in 1D.
    pub fn coords(&self, k: usize) -> [T; 2] {
        let (i, j) = self.lattice(k);
        let x = self.axes[0].coord(i);
        let y = if self.axes.len() == 2 {
            self.axes[1].coord(j)
        } else {
            T::zero()
        };
        [x, y]
    }

    /// Lebesgue measure of the box.
    pub fn measure(&self) -> T {
        self.axes.iter().fold(T::one(), |acc, a| acc * (a.hi - a.lo))
    }
}

/// Norm selector for [`GridFunction::lp_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

/// Nodal scalar field on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridFunction<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: PartialEq> PartialEq for GridFunction<T> {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid) && self.values == other.values
    }
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Arc<Grid<T>>, c: T) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values: vec![c; grid.node_count()],
        }
    }

    /// Samples `f(x, y)` at every node (`y = 0` in 1D).
    pub fn from_fn(grid: &Arc<Grid<T>>, f: impl Fn(T, T) -> T) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let [x, y] = grid.coords(k);
                f(x, y)
            })
            .collect();
        GridFunction {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids)
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_grid(other)?;
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn lp_norm(&self, p: Norm) -> T {
        let w = self.grid.weights();
        match p {
            Norm::L1 => self.values.iter().zip(w).map(|(&v, &w)| w * v.abs()).sum(),
            Norm::L2 => self.values.iter().zip(w).map(|(&v, &w)| w * v * v).sum::<T>().sqrt(),
            Norm::Inf => self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs())),
        }
    }

    /// Quadrature approximation of `∫ f g dx`.
    pub fn inner_product(&self, other: &Self) -> Result<T> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((&a, &b), &w)| w * a * b)
            .sum())
    }

    /// Quadrature measure of `{x : |f(x)| <= eps}` (nodal indicator times weight).
    pub fn level_set_measure(&self, eps: T) -> T {
        self.values
            .iter()
            .zip(self.grid.weights())
            .filter(|(v, _)| v.abs() <= eps)
            .map(|(_, &w)| w)
            .sum()
    }

    fn edge_differences(&self) -> impl Iterator<Item = (T, T)> + '_ {
        // (difference quotient, edge weight) for every grid edge
        let g = &self.grid;
        let axes = g.axes();
        let nx = axes[0].nodes();
        let ny = if axes.len() == 2 { axes[1].nodes() } else { 1 };
        let hx = axes[0].spacing();
        let cell_y = if axes.len() == 2 { axes[1].spacing() } else { T::one() };
        let x_edges = (0..ny).flat_map(move |j| {
            (0..nx - 1).map(move |i| {
                let k = g.node(i, j);
                let wy = if axes.len() == 2 && (j == 0 || j == ny - 1) {
                    cell_y / T::lit(2.0)
                } else {
                    cell_y
                };
                ((self.values[k + 1] - self.values[k]) / hx, hx * wy)
            })
        });
        let y_edges = (axes.len() == 2)
            .then(|| {
                let hy = axes[1].spacing();
                (0..ny - 1).flat_map(move |j| {
                    (0..nx).map(move |i| {
                        let k = g.node(i, j);
                        let wx = if i == 0 || i == nx - 1 { hx / T::lit(2.0) } else { hx };
                        ((self.values[k + nx] - self.values[k]) / hy, hy * wx)
                    })
                })
            })
            .into_iter()
            .flatten();
        x_edges.chain(y_edges)
    }

    /// Discrete `H^1_0` seminorm `(∫|∇f|²)^{1/2}` from edge difference quotients.
    pub fn h1_seminorm(&self) -> T {
        self.edge_differences().map(|(d, w)| w * d * d).sum::<T>().sqrt()
    }

    /// Largest edge difference quotient (discrete Lipschitz constant).
    pub fn max_slope(&self) -> T {
        self.edge_differences().fold(T::zero(), |m, (d, _)| m.max(d.abs()))
    }

    /// Writes `x[,y],value` rows in node order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let two_d = self.grid.dim() == 2;
        let mut buf = String::new();
        buf.push_str(if two_d { "x,y,value\n" } else { "x,value\n" });
        for (k, v) in self.values.iter().enumerate() {
            let [x, y] = self.grid.coords(k);
            if two_d {
                let _ = writeln!(buf, "{x},{y},{v}");
            } else {
                let _ = writeln!(buf, "{x},{v}");
            }
        }
        out.write_all(buf.as_bytes())
    }

    /// Reads a CSV written by [`GridFunction::write_csv`] back onto `grid`.
    ///
    /// Node coordinates must match the grid to a relative `1e-9`.
    pub fn read_csv<R: BufRead>(grid: &Arc<Grid<T>>, input: R) -> Result<Self> {
        let two_d = grid.dim() == 2;
        let expected_header = if two_d { "x,y,value" } else { "x,value" };
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Csv("empty file".into()))?
            .map_err(|e| Error::Csv(e.to_string()))?;
        if header.trim() != expected_header {
            return Err(Error::Csv(format!(
                "line 1: expected header `{expected_header}`, found `{}`",
                header.trim()
            )));
        }
        let cols = if two_d { 3 } else { 2 };
        let tol = T::lit(1e-9) * (T::one() + grid.max_spacing());
        let mut values = Vec::with_capacity(grid.node_count());
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = lineno + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Csv(format!(
                    "line {lineno}: expected {cols} fields, found {}",
                    fields.len()
                )));
            }
            let parsed: Vec<T> = fields
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(T::lit)
                        .ok_or_else(|| Error::Csv(format!("line {lineno}: bad number `{f}`")))
                })
                .collect::<Result<_>>()?;
            let k = values.len();
            if k >= grid.node_count() {
                return Err(Error::Csv(format!("line {lineno}: too many rows")));
            }
            let [x, y] = grid.coords(k);
            let off = (parsed[0] - x).abs() > tol || (two_d && (parsed[1] - y).abs() > tol);
            if off {
                return Err(Error::Csv(format!(
                    "line {lineno}: node coordinates do not match the grid"
                )));
            }
            values.push(parsed[cols - 1]);
        }
        if values.len() != grid.node_count() {
            return Err(Error::Csv(format!(
                "expected {} rows, found {}",
                grid.node_count(),
                values.len()
            )));
        }
        GridFunction::new(Arc::clone(grid), values)
    }
}
