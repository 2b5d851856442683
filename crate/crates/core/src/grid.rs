//! Uniform space-time grids and the fields stored on them.

use crate::error::{MfgError, Result};

/// How the spatial domain is closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Node `i` and node `i + I` are the same point along every axis.
    Periodic,
    /// Plain box; used by the sampled (mesh-free) solvers.
    SampledBox,
}

/// Uniform discretization of `[0, T] x [lo, hi]^d`.
///
/// Space nodes sit at the left edge of each cell, `x_i = lo + i h` for
/// `i in 0..I`, so a periodic grid never stores the seam twice. Multi-indices
/// are flattened row-major (last axis fastest).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimeGrid {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub steps: usize,
    pub horizon: f64,
    pub h: f64,
    pub dt: f64,
    pub boundary: Boundary,
}

impl SpaceTimeGrid {
    pub fn new(
        dim: usize,
        lo: f64,
        hi: f64,
        horizon: f64,
        nodes: usize,
        steps: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(MfgError::InvalidGrid("dimension must be at least 1".into()));
        }
        if nodes < 2 {
            return Err(MfgError::InvalidGrid(format!("need at least 2 nodes per axis, got {nodes}")));
        }
        if steps == 0 {
            return Err(MfgError::InvalidGrid("need at least one time step".into()));
        }
        if !(hi > lo) || !(horizon > 0.0) {
            return Err(MfgError::InvalidGrid(format!("degenerate domain [{lo}, {hi}] x [0, {horizon}]")));
        }
        Ok(Self {
            dim,
            lo,
            hi,
            nodes,
            steps,
            horizon,
            h: (hi - lo) / nodes as f64,
            dt: horizon / steps as f64,
            boundary,
        })
    }

    /// Number of spatial nodes, `I^d`.
    pub fn space_len(&self) -> usize {
        self.nodes.pow(self.dim as u32)
    }

    /// Number of time nodes, `N + 1`.
    pub fn time_len(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h
    }

    /// Stride of axis `k` in the flattened layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.nodes.pow((self.dim - 1 - axis) as u32)
    }

    /// Index along `axis` of flat node `flat`.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.nodes
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            idx[k] = flat % self.nodes;
            flat /= self.nodes;
        }
        idx
    }

    /// Flattens a multi-index, wrapping it when the grid is periodic.
    pub fn flatten(&self, index: &[isize]) -> Result<usize> {
        if index.len() != self.dim {
            return Err(MfgError::ShapeMismatch(format!(
                "index has {} components, grid has dimension {}",
                index.len(),
                self.dim
            )));
        }
        let n = self.nodes as isize;
        let mut flat = 0usize;
        for &i in index {
            let j = match self.boundary {
                Boundary::Periodic => i.rem_euclid(n),
                Boundary::SampledBox if (0..n).contains(&i) => i,
                Boundary::SampledBox => {
                    return Err(MfgError::IndexOutOfRange { index: index.to_vec(), nodes: self.nodes })
                }
            };
            flat = flat * self.nodes + j as usize;
        }
        Ok(flat)
    }

    /// Coordinates of flat node `flat`, written into `x`.
    pub fn point_into(&self, flat: usize, x: &mut [f64]) {
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = self.coord(self.axis_index(flat, k));
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.point_into(flat, &mut x);
        x
    }

    /// Nearest node index along one axis for coordinate `x`.
    pub fn index_of(&self, x: f64) -> isize {
        ((x - self.lo) / self.h).round() as isize
    }

    /// Flat neighbour of `flat` shifted by `+1` (`forward`) or `-1` along `axis`, periodic wrap.
    #[inline]
    pub fn neighbor(&self, flat: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.nodes;
        if forward {
            if i + 1 == self.nodes {
                flat - i * stride
            } else {
                flat + stride
            }
        } else if i == 0 {
            flat + (self.nodes - 1) * stride
        } else {
            flat - stride
        }
    }
}

/// Values on every node of a [`SpaceTimeGrid`], with `channels` values per node.
///
/// Layout is `[time][space][channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: SpaceTimeGrid,
    channels: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: SpaceTimeGrid, channels: usize) -> Self {
        Self::constant(grid, channels, 0.0)
    }

    pub fn constant(grid: SpaceTimeGrid, channels: usize, value: f64) -> Self {
        let len = grid.time_len() * grid.space_len() * channels;
        Self { grid, channels, values: vec![value; len] }
    }

    pub fn from_values(grid: SpaceTimeGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        let len = grid.time_len() * grid.space_len() * channels;
        if values.len() != len {
            return Err(MfgError::ShapeMismatch(format!("expected {len} values, got {}", values.len())));
        }
        Ok(Self { grid, channels, values })
    }

    /// Samples `f(t, x, out)` at every node.
    pub fn from_fn<F>(grid: SpaceTimeGrid, channels: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        let mut field = Self::zeros(grid, channels);
        let mut x = vec![0.0; grid.dim];
        for n in 0..grid.time_len() {
            let t = grid.time(n);
            for s in 0..grid.space_len() {
                grid.point_into(s, &mut x);
                let off = (n * grid.space_len() + s) * channels;
                f(t, &x, &mut field.values[off..off + channels]);
            }
        }
        field
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn slice_len(&self) -> usize {
        self.grid.space_len() * self.channels
    }

    /// All spatial values at time node `n`.
    pub fn slice(&self, n: usize) -> &[f64] {
        let len = self.slice_len();
        &self.values[n * len..(n + 1) * len]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.slice_len();
        &mut self.values[n * len..(n + 1) * len]
    }

    /// Value at time node `n`, spatial multi-index `index`, channel `c`.
    pub fn get(&self, n: usize, index: &[isize], c: usize) -> Result<f64> {
        self.check_time(n, c)?;
        let s = self.grid.flatten(index)?;
        Ok(self.values[(n * self.grid.space_len() + s) * self.channels + c])
    }

    pub fn set(&mut self, n: usize, index: &[isize], c: usize, v: f64) -> Result<()> {
        self.check_time(n, c)?;
        let s = self.grid.flatten(index)?;
        let off = (n * self.grid.space_len() + s) * self.channels + c;
        self.values[off] = v;
        Ok(())
    }

    fn check_time(&self, n: usize, c: usize) -> Result<()> {
        if n >= self.grid.time_len() || c >= self.channels {
            return Err(MfgError::IndexOutOfRange { index: vec![n as isize, c as isize], nodes: self.grid.time_len() });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest absolute nodewise difference.
    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64> {
        if self.values.len() != other.values.len() || self.channels != other.channels {
            return Err(MfgError::ShapeMismatch("fields have different shapes".into()));
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Convenience for single-channel fields.
pub fn eval_field(f: &GridField, n: usize, index: &[isize]) -> Result<f64> {
    f.get(n, index, 0)
}

/// A density, value function and policy on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub rho: GridField,
    pub phi: GridField,
    pub q: GridField,
}

impl Solution {
    pub fn new(rho: GridField, phi: GridField, q: GridField) -> Result<Self> {
        let g = *rho.grid();
        if *phi.grid() != g || *q.grid() != g {
            return Err(MfgError::ShapeMismatch("solution fields live on different grids".into()));
        }
        if rho.channels() != 1 || phi.channels() != 1 || q.channels() != g.dim {
            return Err(MfgError::ShapeMismatch(format!(
                "expected channels (1, 1, {}), got ({}, {}, {})",
                g.dim,
                rho.channels(),
                phi.channels(),
                q.channels()
            )));
        }
        Ok(Self { rho, phi, q })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        self.rho.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.phi.is_finite() && self.q.is_finite()
    }
}
