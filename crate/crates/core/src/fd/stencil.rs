//! Periodic finite-difference stencils on one time slice.
//!
//! Spatial slices are flat arrays in the grid's row-major node order. Policy
//! slices carry `dim` interleaved channels per node.

use crate::error::{MfgError, Result};
use crate::grid::{Boundary, SpaceTimeGrid};
use crate::par;

/// Stencil geometry for one periodic grid.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    grid: SpaceTimeGrid,
}

impl Stencil {
    pub fn new(grid: &SpaceTimeGrid) -> Result<Self> {
        if grid.boundary != Boundary::Periodic {
            return Err(MfgError::NotPeriodic);
        }
        Ok(Self { grid: *grid })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.space_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, u: &[f64], channels: usize) -> Result<()> {
        if u.len() != self.len() * channels {
            return Err(MfgError::ShapeMismatch(format!(
                "slice has {} values, expected {}",
                u.len(),
                self.len() * channels
            )));
        }
        Ok(())
    }

    /// `sum_k (u[i+e_k] - 2u[i] + u[i-e_k]) / h^2` at node `i`.
    #[inline]
    pub fn laplacian_at(&self, u: &[f64], i: usize) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.dim {
            acc += u[g.neighbor(i, k, true)] - 2.0 * u[i] + u[g.neighbor(i, k, false)];
        }
        acc / (g.h * g.h)
    }

    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(u, 1)?;
        self.check(out, 1)?;
        par::fill_indexed(out, |i| self.laplacian_at(u, i));
        Ok(())
    }

    pub fn laplacian(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(u, &mut out)?;
        Ok(out)
    }

    /// Policy component `k` averaged over the face between `i` and its `+e_k` neighbour.
    #[inline]
    fn face_velocity(&self, q: &[f64], i: usize, k: usize) -> f64 {
        let d = self.grid.dim;
        let j = self.grid.neighbor(i, k, true);
        0.5 * (q[i * d + k] + q[j * d + k])
    }

    /// Upwind flux of `rho q_k` through the `+e_k` face of node `i`.
    ///
    /// The density is carried with velocity `-q`, so a positive face policy
    /// takes the density from the `+e_k` side.
    #[inline]
    fn eo_flux(&self, rho: &[f64], q: &[f64], i: usize, k: usize) -> f64 {
        let j = self.grid.neighbor(i, k, true);
        let v = self.face_velocity(q, i, k);
        rho[i] * v.min(0.0) + rho[j] * v.max(0.0)
    }

    #[inline]
    pub fn eo_divergence_at(&self, rho: &[f64], q: &[f64], i: usize) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.dim {
            let back = g.neighbor(i, k, false);
            acc += self.eo_flux(rho, q, i, k) - self.eo_flux(rho, q, back, k);
        }
        acc / g.h
    }

    /// Engquist-Osher discretization of `div(rho q)`.
    pub fn eo_divergence(&self, rho: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        self.check(rho, 1)?;
        self.check(q, self.grid.dim)?;
        let mut out = vec![0.0; rho.len()];
        par::fill_indexed(&mut out, |i| self.eo_divergence_at(rho, q, i));
        Ok(out)
    }

    /// Diagonal coefficient of `rho -> div_EO(rho q)` at node `i`.
    #[inline]
    pub fn eo_divergence_diag(&self, q: &[f64], i: usize) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.dim {
            let back = g.neighbor(i, k, false);
            acc += self.face_velocity(q, i, k).min(0.0) - self.face_velocity(q, back, k).max(0.0);
        }
        acc / g.h
    }

    /// One-sided difference of `phi` along axis `k` at node `i`: backward
    /// where `q_k > 0`, forward where `q_k < 0`, zero where `q_k = 0`.
    #[inline]
    pub fn upwind_difference_at(&self, phi: &[f64], q: &[f64], i: usize, k: usize) -> f64 {
        let g = &self.grid;
        let qk = q[i * g.dim + k];
        if qk > 0.0 {
            (phi[i] - phi[g.neighbor(i, k, false)]) / g.h
        } else if qk < 0.0 {
            (phi[g.neighbor(i, k, true)] - phi[i]) / g.h
        } else {
            0.0
        }
    }

    /// Upwinded `q . D phi` at node `i`, built from [`Self::upwind_difference_at`].
    #[inline]
    pub fn upwind_transport_at(&self, phi: &[f64], q: &[f64], i: usize) -> f64 {
        let d = self.grid.dim;
        (0..d).map(|k| q[i * d + k] * self.upwind_difference_at(phi, q, i, k)).sum()
    }

    /// Diagonal coefficient of `phi -> q . D phi` (upwinded) at node `i`.
    #[inline]
    pub fn upwind_transport_diag(&self, q: &[f64], i: usize) -> f64 {
        let d = self.grid.dim;
        q[i * d..(i + 1) * d].iter().map(|v| v.abs()).sum::<f64>() / self.grid.h
    }

    /// Row `(lower, diag, upper)` of `rho -> div_EO(rho q)` on a one-dimensional grid.
    #[inline]
    pub fn eo_divergence_row_1d(&self, q: &[f64], i: usize) -> (f64, f64, f64) {
        let back = self.grid.neighbor(i, 0, false);
        let (v_plus, v_minus) = (self.face_velocity(q, i, 0), self.face_velocity(q, back, 0));
        let h = self.grid.h;
        (-v_minus.min(0.0) / h, (v_plus.min(0.0) - v_minus.max(0.0)) / h, v_plus.max(0.0) / h)
    }

    /// Row `(lower, diag, upper)` of the upwinded `phi -> q . D phi` on a one-dimensional grid.
    #[inline]
    pub fn upwind_transport_row_1d(&self, q: &[f64], i: usize) -> (f64, f64, f64) {
        let h = self.grid.h;
        let qi = q[i];
        (-qi.max(0.0) / h, qi.abs() / h, qi.min(0.0) / h)
    }

    /// Centred gradient at node `i`, written into `out` (length `dim`).
    #[inline]
    pub fn centred_gradient_at(&self, u: &[f64], i: usize, out: &mut [f64]) {
        let g = &self.grid;
        for (k, o) in out.iter_mut().enumerate() {
            *o = (u[g.neighbor(i, k, true)] - u[g.neighbor(i, k, false)]) / (2.0 * g.h);
        }
    }
}

/// Standalone Laplacian; the non-periodic case is rejected.
pub fn discrete_laplacian(u: &[f64], grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
    if u.is_empty() {
        return Err(MfgError::ShapeMismatch("empty slice".into()));
    }
    Stencil::new(grid)?.laplacian(u)
}

pub fn eo_divergence(rho: &[f64], q: &[f64], grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
    Stencil::new(grid)?.eo_divergence(rho, q)
}
