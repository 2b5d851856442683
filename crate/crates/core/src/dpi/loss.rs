//! Residual losses of the three training stages.
//!
//! Each stage loss is the mean squared residual over interior points plus the
//! mean squared mismatch of its side condition, and comes with the exact
//! gradient with respect to the parameters of the network that stage trains.
//! The other two networks are frozen inputs.

use crate::error::{MfgError, Result};
use crate::grid::{GridField, Solution, SpaceTimeGrid};
use crate::nn::{Jet2, Network, SamplePoint};
use crate::par;
use crate::problem::MfgProblem;

/// The density, value and policy networks.
#[derive(Clone, Debug, PartialEq)]
pub struct DpiNetworks {
    pub rho: Network,
    pub phi: Network,
    pub q: Network,
}

impl DpiNetworks {
    /// Checks input and output sizes against the problem dimension.
    pub fn check(&self, problem: &MfgProblem) -> Result<()> {
        let d = problem.dim;
        for (name, net, out) in [("rho", &self.rho, 1), ("phi", &self.phi, 1), ("q", &self.q, d)] {
            let spec = net.spec();
            if spec.input_dim != d + 1 || spec.output_dim != out {
                return Err(MfgError::ShapeMismatch(format!(
                    "{name} network maps {} -> {}, expected {} -> {out}",
                    spec.input_dim,
                    spec.output_dim,
                    d + 1
                )));
            }
        }
        Ok(())
    }

    /// `(rho, phi, q)` at one point.
    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        Ok((self.rho.forward(t, x)?[0], self.phi.forward(t, x)?[0], self.q.forward(t, x)?))
    }

    /// The three networks sampled on every node of `grid`.
    pub fn sample_on_grid(&self, grid: &SpaceTimeGrid) -> Result<Solution> {
        let (ns, nt, d) = (grid.space_len(), grid.time_len(), grid.dim);
        let nodes = par::try_map_indexed(ns * nt, |k| {
            let (n, s) = (k / ns, k % ns);
            self.evaluate(grid.time(n), &grid.point(s))
        })?;
        let mut rho = Vec::with_capacity(ns * nt);
        let mut phi = Vec::with_capacity(ns * nt);
        let mut q = Vec::with_capacity(ns * nt * d);
        for (r, p, v) in nodes {
            rho.push(r);
            phi.push(p);
            q.extend(v);
        }
        Solution::new(
            GridField::from_values(*grid, 1, rho)?,
            GridField::from_values(*grid, 1, phi)?,
            GridField::from_values(*grid, d, q)?,
        )
    }
}

/// Fokker-Planck residual `rho_t - nu Lap rho - (grad rho . q + rho div q)`.
pub fn fp_residual(nu: f64, rho: &Jet2, q: &Jet2) -> f64 {
    let transport: f64 = rho.grad(0).iter().zip(&q.value).map(|(g, v)| g * v).sum();
    rho.dt[0] - nu * rho.lap_x[0] - (transport + rho.value[0] * q.divergence())
}

/// HJB residual for a frozen policy, `phi_t + nu Lap phi - q . grad phi + L(x, rho, q)`.
///
/// Zero exactly when `-phi_t - nu Lap phi + q . grad phi - L = 0`, which at the
/// optimal policy is the HJB equation `-phi_t - nu Lap phi + H = 0`.
pub fn hjb_residual(problem: &MfgProblem, x: &[f64], rho: f64, phi: &Jet2, q: &[f64]) -> Result<f64> {
    let transport: f64 = phi.grad(0).iter().zip(q).map(|(g, v)| g * v).sum();
    Ok(phi.dt[0] + problem.nu * phi.lap_x[0] - transport + problem.lagrangian(x, rho, q)?)
}

/// Policy residuals `(L(x, rho, q) - q . p, q - grad_p H(x, rho, p))`.
pub fn policy_residuals(problem: &MfgProblem, x: &[f64], rho: f64, p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    let qp: f64 = q.iter().zip(p).map(|(a, b)| a * b).sum();
    let value_gap = problem.lagrangian(x, rho, q)? - qp;
    let opt = problem.optimal_policy(x, rho, p)?;
    Ok((value_gap, q.iter().zip(&opt).map(|(a, b)| a - b).collect()))
}

fn check_batches(interior: &[SamplePoint], spatial: Option<&[Vec<f64>]>) -> Result<()> {
    if interior.is_empty() || spatial.is_some_and(|s| s.is_empty()) {
        return Err(MfgError::InvalidParameter("loss batches must be nonempty".into()));
    }
    Ok(())
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    acc.iter_mut().zip(other).for_each(|(a, b)| *a += b);
}

/// Fokker-Planck stage loss and its gradient with respect to the density network.
pub fn loss_fp_with_grad(
    nets: &DpiNetworks,
    problem: &MfgProblem,
    interior: &[SamplePoint],
    spatial: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_batches(interior, Some(spatial))?;
    let (d, nu) = (problem.dim, problem.nu);
    let q_jets = nets.q.jets(interior)?;
    let w = 1.0 / interior.len() as f64;
    let (interior_loss, mut grad) = nets.rho.loss_and_param_grad(interior, true, |b, rho| {
        let q = &q_jets[b];
        let r = fp_residual(nu, rho, q);
        let mut adj = Jet2::zeros(1, d);
        adj.dt[0] = 2.0 * w * r;
        adj.lap_x[0] = -2.0 * w * r * nu;
        adj.value[0] = -2.0 * w * r * q.divergence();
        for k in 0..d {
            adj.grad_x[k] = -2.0 * w * r * q.value[k];
        }
        Ok((w * r * r, adj))
    })?;
    let initial: Vec<SamplePoint> = spatial.iter().map(|x| SamplePoint::new(0.0, x.clone())).collect();
    let ws = 1.0 / spatial.len() as f64;
    let (cond_loss, cond_grad) = nets.rho.loss_and_param_grad(&initial, false, |b, rho| {
        let e = rho.value[0] - problem.initial_density(&initial[b].x);
        let mut adj = Jet2::zeros(1, d);
        adj.value[0] = 2.0 * ws * e;
        Ok((ws * e * e, adj))
    })?;
    add_into(&mut grad, &cond_grad);
    Ok((interior_loss + cond_loss, grad))
}

pub fn loss_fp(
    nets: &DpiNetworks,
    problem: &MfgProblem,
    interior: &[SamplePoint],
    spatial: &[Vec<f64>],
) -> Result<f64> {
    Ok(loss_fp_with_grad(nets, problem, interior, spatial)?.0)
}

fn first_values(outputs: Vec<Vec<f64>>) -> Vec<f64> {
    outputs.into_iter().map(|v| v[0]).collect()
}

/// HJB stage loss and its gradient with respect to the value network.
pub fn loss_hjb_with_grad(
    nets: &DpiNetworks,
    problem: &MfgProblem,
    interior: &[SamplePoint],
    spatial: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_batches(interior, Some(spatial))?;
    let (d, nu) = (problem.dim, problem.nu);
    let rho = first_values(nets.rho.forward_batch(interior)?);
    let q = nets.q.forward_batch(interior)?;
    let w = 1.0 / interior.len() as f64;
    let (interior_loss, mut grad) = nets.phi.loss_and_param_grad(interior, true, |b, phi| {
        let r = hjb_residual(problem, &interior[b].x, rho[b], phi, &q[b])?;
        let mut adj = Jet2::zeros(1, d);
        adj.dt[0] = 2.0 * w * r;
        adj.lap_x[0] = 2.0 * w * r * nu;
        for k in 0..d {
            adj.grad_x[k] = -2.0 * w * r * q[b][k];
        }
        Ok((w * r * r, adj))
    })?;
    let terminal: Vec<SamplePoint> = spatial.iter().map(|x| SamplePoint::new(problem.horizon, x.clone())).collect();
    let rho_t = first_values(nets.rho.forward_batch(&terminal)?);
    let ws = 1.0 / spatial.len() as f64;
    let (cond_loss, cond_grad) = nets.phi.loss_and_param_grad(&terminal, false, |b, phi| {
        let e = phi.value[0] - problem.terminal_cost(&terminal[b].x, rho_t[b])?;
        let mut adj = Jet2::zeros(1, d);
        adj.value[0] = 2.0 * ws * e;
        Ok((ws * e * e, adj))
    })?;
    add_into(&mut grad, &cond_grad);
    Ok((interior_loss + cond_loss, grad))
}

pub fn loss_hjb(
    nets: &DpiNetworks,
    problem: &MfgProblem,
    interior: &[SamplePoint],
    spatial: &[Vec<f64>],
) -> Result<f64> {
    Ok(loss_hjb_with_grad(nets, problem, interior, spatial)?.0)
}

/// Policy stage loss and its gradient with respect to the policy network.
///
/// Both terms share the interior batch:
/// `mean |L(x, rho, q) - q . grad phi|^2 + mean |q - grad_p H(x, rho, grad phi)|^2`.
pub fn loss_policy_with_grad(
    nets: &DpiNetworks,
    problem: &MfgProblem,
    interior: &[SamplePoint],
) -> Result<(f64, Vec<f64>)> {
    check_batches(interior, None)?;
    let d = problem.dim;
    let rho = first_values(nets.rho.forward_batch(interior)?);
    let phi = nets.phi.jets(interior)?;
    let w = 1.0 / interior.len() as f64;
    nets.q.loss_and_param_grad(interior, false, |b, q| {
        let x = &interior[b].x;
        let p = phi[b].grad(0);
        let (gap, diff) = policy_residuals(problem, x, rho[b], p, &q.value)?;
        let mut dl = vec![0.0; d];
        problem.lagrangian_grad_q_into(x, rho[b], &q.value, &mut dl)?;
        let mut adj = Jet2::zeros(d, d);
        for k in 0..d {
            adj.value[k] = 2.0 * w * (gap * (dl[k] - p[k]) + diff[k]);
        }
        let loss = w * (gap * gap + diff.iter().map(|v| v * v).sum::<f64>());
        Ok((loss, adj))
    })
}

pub fn loss_policy(nets: &DpiNetworks, problem: &MfgProblem, interior: &[SamplePoint]) -> Result<f64> {
    Ok(loss_policy_with_grad(nets, problem, interior)?.0)
}
