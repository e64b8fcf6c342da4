//! Uniform time grids and vector-valued paths sampled on them.
//!
//! Paths are stored flat (row-major, `(steps+1) * dim`) so that the fine
//! grids used by the quadrature identities (~2 million nodes) stay cheap to
//! allocate and scan.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_n = horizon` with `t_i = horizon * i / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidConfig("grid needs at least one step".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i`, exact at both endpoints.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        self.horizon * i as f64 / self.steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }

    /// Same step count and horizons equal to ~1 ulp-scale tolerance.
    pub fn compatible(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps
            && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon.abs().max(1.0)
    }
}

/// A path `t_i -> R^dim` on a [`TimeGrid`], one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>, // (steps + 1) * dim, row-major by node
}

impl Path {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("path dimension must be >= 1".into()));
        }
        Ok(Path { grid, dim, data: vec![0.0; (grid.steps + 1) * dim] })
    }

    /// Build by sampling `f` at every node time.
    pub fn from_fn(
        grid: TimeGrid,
        dim: usize,
        mut f: impl FnMut(f64) -> DVector<f64>,
    ) -> Result<Self> {
        let mut p = Path::zeros(grid, dim)?;
        for i in 0..=grid.steps {
            let v = f(grid.node(i));
            if v.len() != dim {
                return Err(Error::Incompatible(format!(
                    "path sampler returned dimension {} at node {i}, expected {dim}",
                    v.len()
                )));
            }
            p.set_node(i, &v);
        }
        p.ensure_finite()?;
        Ok(p)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.grid_ref()
    }

    fn grid_ref(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.node_slice(i))
    }

    pub fn node_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set_node(&mut self, i: usize, v: &DVector<f64>) {
        assert_eq!(v.len(), self.dim, "node value has wrong dimension");
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v.as_slice());
    }

    pub fn set_node_slice(&mut self, i: usize, v: &[f64]) {
        assert_eq!(v.len(), self.dim, "node value has wrong dimension");
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
    }

    pub fn start(&self) -> DVector<f64> {
        self.node(0)
    }

    pub fn end(&self) -> DVector<f64> {
        self.node(self.grid.steps)
    }

    /// `sup_i |x(t_i)|_2`.
    pub fn sup_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..=self.grid.steps {
            let s = self.node_slice(i);
            let n2: f64 = s.iter().map(|x| x * x).sum();
            best = best.max(n2);
        }
        best.sqrt()
    }

    /// `sup_i |x(t_i) - y(t_i)|_2` on a shared grid.
    pub fn sup_distance(&self, other: &Path) -> Result<f64> {
        if self.dim != other.dim || !self.grid.compatible(&other.grid) {
            return Err(Error::Incompatible(
                "sup distance needs equal grids and dimensions".into(),
            ));
        }
        let mut best = 0.0f64;
        for i in 0..=self.grid.steps {
            let a = self.node_slice(i);
            let b = other.node_slice(i);
            let n2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(n2);
        }
        Ok(best.sqrt())
    }

    /// `a * self + b * other`, nodewise.
    pub fn linear_combination(&self, a: f64, other: &Path, b: f64) -> Result<Path> {
        if self.dim != other.dim || !self.grid.compatible(&other.grid) {
            return Err(Error::Incompatible(
                "linear combination needs equal grids and dimensions".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Path { grid: self.grid, dim: self.dim, data })
    }

    pub fn scale(&self, a: f64) -> Path {
        Path {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("path values".into()))
        }
    }

    /// Write as CSV with header `t,x1,...,xd`. Floats use the shortest
    /// round-trip decimal form, so write -> read -> write is byte-identical.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for j in 1..=self.dim {
            header.push_str(&format!(",x{j}"));
        }
        writeln!(w, "{header}")?;
        let mut line = String::new();
        for i in 0..=self.grid.steps {
            line.clear();
            line.push_str(&format!("{}", self.grid.node(i)));
            for x in self.node_slice(i) {
                line.push_str(&format!(",{x}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Parse the CSV form produced by [`Path::write_csv`]; the grid is
    /// reconstructed from the time column and checked for uniformity.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Path> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty CSV input".into()))??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.is_empty() || cols[0] != "t" || cols.len() < 2 {
            return Err(Error::Parse(format!("bad CSV header: {header:?}")));
        }
        for (j, c) in cols[1..].iter().enumerate() {
            if *c != format!("x{}", j + 1) {
                return Err(Error::Parse(format!("bad CSV header column {c:?}")));
            }
        }
        let dim = cols.len() - 1;

        let mut times = Vec::new();
        let mut data = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let row = line.trim_end();
            if row.is_empty() {
                continue;
            }
            let mut fields = row.split(',');
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad float {s:?} on data row {lineno}")))
            };
            let t = parse(
                fields
                    .next()
                    .ok_or_else(|| Error::Parse(format!("empty row {lineno}")))?,
            )?;
            times.push(t);
            let mut count = 0;
            for f in fields {
                data.push(parse(f)?);
                count += 1;
            }
            if count != dim {
                return Err(Error::Parse(format!(
                    "row {lineno} has {count} coordinates, expected {dim}"
                )));
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse("need at least two rows (one step)".into()));
        }
        let steps = times.len() - 1;
        let horizon = *times.last().unwrap();
        if times[0] != 0.0 {
            return Err(Error::Parse(format!("grid must start at t = 0, got {}", times[0])));
        }
        let grid = TimeGrid::new(horizon, steps)?;
        let tol = 1e-9 * horizon.abs().max(1.0);
        for (i, &t) in times.iter().enumerate() {
            if (t - grid.node(i)).abs() > tol {
                return Err(Error::Parse(format!(
                    "non-uniform time column at row {i}: {t} vs expected {}",
                    grid.node(i)
                )));
            }
        }
        let p = Path { grid, dim, data };
        p.ensure_finite()?;
        Ok(p)
    }
}
