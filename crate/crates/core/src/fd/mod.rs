//! Finite-difference policy iteration on periodic grids.
//!
//! One iteration solves, with the policy frozen,
//!
//! 1. the Fokker-Planck equation forward in time (implicit Euler, centred
//!    Laplacian, Engquist-Osher divergence),
//! 2. the linear HJB equation backward in time (implicit Euler, upwinded
//!    transport, running cost `L(x, rho, q)` on the right-hand side),
//!
//! and then replaces the policy by the pointwise maximizer `grad_p H(x, rho, D phi)`.
//! [`run_fixed_point`] iterates the fully coupled system with damping and
//! serves as the reference when no closed form exists.

pub mod linsolve;
pub mod stencil;

use crate::error::{MfgError, Result};
use crate::grid::{Boundary, GridField, Solution, SpaceTimeGrid};
use crate::par;
use crate::problem::MfgProblem;

pub use linsolve::{bicgstab, solve_cyclic_tridiagonal, SolveStats};
pub use stencil::{discrete_laplacian, eo_divergence, Stencil};

#[derive(Clone, Debug, PartialEq)]
pub struct FdConfig {
    /// Policy iterations `K`.
    pub iterations: usize,
    pub linear_tol: f64,
    pub max_linear_iters: usize,
    /// Componentwise bound `R` on the policy.
    pub policy_bound: f64,
    pub fp_damping: f64,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    /// Inner policy sweeps per nonlinear HJB step in the fixed-point solver.
    pub hjb_inner_tol: f64,
    pub hjb_inner_max: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            linear_tol: 1e-12,
            max_linear_iters: 2000,
            policy_bound: 1e3,
            fp_damping: 0.5,
            fp_tol: 1e-8,
            fp_max_iters: 2000,
            hjb_inner_tol: 1e-11,
            hjb_inner_max: 200,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(MfgError::InvalidParameter("iterations must be at least 1".into()));
        }
        if !(self.linear_tol > 0.0) {
            return Err(MfgError::InvalidParameter("linear_tol must be positive".into()));
        }
        if !(self.fp_damping > 0.0 && self.fp_damping <= 1.0) {
            return Err(MfgError::InvalidParameter(format!("fp_damping {} not in (0, 1]", self.fp_damping)));
        }
        if !(self.policy_bound > 0.0) {
            return Err(MfgError::InvalidParameter("policy_bound must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of a policy iteration run.
///
/// `change_*[k]` is the sup-norm change of iterate `k` against iterate `k - 1`
/// (against the zero field for `k = 0`; for the policy, against `q0`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PiHistory {
    pub change_rho: Vec<f64>,
    pub change_phi: Vec<f64>,
    pub change_q: Vec<f64>,
    /// Sup-norm distances `(rho, phi, q)` to a reference, when one was supplied.
    pub reference_distance: Vec<[f64; 3]>,
}

impl PiHistory {
    pub fn len(&self) -> usize {
        self.change_rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.change_rho.is_empty()
    }

    /// Largest of the three changes at iteration `k`.
    pub fn max_change(&self, k: usize) -> f64 {
        self.change_rho[k].max(self.change_phi[k]).max(self.change_q[k])
    }
}

/// Uniform grid over the problem's domain and horizon.
pub fn uniform_grid(problem: &MfgProblem, nodes: usize, steps: usize) -> Result<SpaceTimeGrid> {
    SpaceTimeGrid::new(problem.dim, problem.lo, problem.hi, problem.horizon, nodes, steps, problem.boundary)
}

fn check_setup(problem: &MfgProblem, grid: &SpaceTimeGrid) -> Result<Stencil> {
    if problem.boundary != Boundary::Periodic {
        return Err(MfgError::NotPeriodic);
    }
    if grid.dim != problem.dim {
        return Err(MfgError::ShapeMismatch(format!(
            "grid dimension {} does not match problem dimension {}",
            grid.dim, problem.dim
        )));
    }
    Stencil::new(grid)
}

/// One implicit Euler step of the Fokker-Planck equation:
/// `rho_next - dt (nu Lap rho_next + div(rho_next q_next)) = rho_n`.
pub fn fp_step_implicit(stencil: &Stencil, rho_n: &[f64], q_next: &[f64], nu: f64, cfg: &FdConfig) -> Result<Vec<f64>> {
    let g = stencil.grid();
    let n = stencil.len();
    if rho_n.len() != n || q_next.len() != n * g.dim {
        return Err(MfgError::ShapeMismatch("fp_step_implicit: slice lengths".into()));
    }
    let dt = g.dt;
    if g.dim == 1 {
        let lap = nu / (g.h * g.h);
        let mut rows = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (l, d, u) = stencil.eo_divergence_row_1d(q_next, i);
            rows.0[i] = -dt * (lap + l);
            rows.1[i] = 1.0 + dt * (2.0 * lap - d);
            rows.2[i] = -dt * (lap + u);
        }
        return solve_cyclic_tridiagonal(&rows.0, &rows.1, &rows.2, rho_n);
    }
    let lap_diag = -2.0 * g.dim as f64 / (g.h * g.h);
    let diag: Vec<f64> = (0..n).map(|i| 1.0 - dt * (nu * lap_diag + stencil.eo_divergence_diag(q_next, i))).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        par::fill_indexed(out, |i| {
            x[i] - dt * (nu * stencil.laplacian_at(x, i) + stencil.eo_divergence_at(x, q_next, i))
        })
    };
    let mut x = rho_n.to_vec();
    bicgstab(apply, &diag, rho_n, &mut x, cfg.linear_tol, cfg.max_linear_iters)?;
    Ok(x)
}

/// One implicit Euler step of the linear HJB equation, backward in time:
/// `phi_n - dt (nu Lap phi_n - q_n . D phi_n) = phi_next + dt L(x, rho_next, q_next)`.
pub fn hjb_step_implicit(
    stencil: &Stencil,
    problem: &MfgProblem,
    phi_next: &[f64],
    q_n: &[f64],
    rho_next: &[f64],
    q_next: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    let g = stencil.grid();
    let (n, d) = (stencil.len(), g.dim);
    if phi_next.len() != n || rho_next.len() != n || q_n.len() != n * d || q_next.len() != n * d {
        return Err(MfgError::ShapeMismatch("hjb_step_implicit: slice lengths".into()));
    }
    let (dt, nu) = (g.dt, problem.nu);
    let rhs = par::try_map_indexed(n, |i| {
        let x = g.point(i);
        let cost = problem.lagrangian(&x, rho_next[i], &q_next[i * d..(i + 1) * d])?;
        Ok::<_, MfgError>(phi_next[i] + dt * cost)
    })?;
    if d == 1 {
        let lap = nu / (g.h * g.h);
        let mut rows = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (l, dg, u) = stencil.upwind_transport_row_1d(q_n, i);
            rows.0[i] = -dt * (lap - l);
            rows.1[i] = 1.0 + dt * (2.0 * lap + dg);
            rows.2[i] = -dt * (lap - u);
        }
        return solve_cyclic_tridiagonal(&rows.0, &rows.1, &rows.2, &rhs);
    }
    let lap_diag = 2.0 * d as f64 / (g.h * g.h);
    let diag: Vec<f64> = (0..n).map(|i| 1.0 + dt * (nu * lap_diag + stencil.upwind_transport_diag(q_n, i))).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        par::fill_indexed(out, |i| {
            x[i] - dt * (nu * stencil.laplacian_at(x, i) - stencil.upwind_transport_at(x, q_n, i))
        })
    };
    let mut x = phi_next.to_vec();
    bicgstab(apply, &diag, &rhs, &mut x, cfg.linear_tol, cfg.max_linear_iters)?;
    Ok(x)
}

fn policy_slice(stencil: &Stencil, problem: &MfgProblem, phi: &[f64], rho: &[f64], bound: f64) -> Result<Vec<f64>> {
    let g = stencil.grid();
    let d = g.dim;
    let nodes = par::try_map_indexed(stencil.len(), |i| {
        let x = g.point(i);
        let mut p = vec![0.0; d];
        stencil.centred_gradient_at(phi, i, &mut p);
        let mut q = vec![0.0; d];
        problem.optimal_policy_into(&x, rho[i], &p, &mut q)?;
        q.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
        Ok::<_, MfgError>(q)
    })?;
    Ok(nodes.into_iter().flatten().collect())
}

/// `q_n = clamp(grad_p H(x, rho_n, D phi_n), -R, R)` at every node, with centred `D`.
pub fn policy_update_fd(problem: &MfgProblem, phi: &GridField, rho: &GridField, bound: f64) -> Result<GridField> {
    let grid = *phi.grid();
    let stencil = check_setup(problem, &grid)?;
    let mut q = GridField::zeros(grid, grid.dim);
    for n in 0..grid.time_len() {
        let slice = policy_slice(&stencil, problem, phi.slice(n), rho.slice(n), bound)?;
        q.slice_mut(n).copy_from_slice(&slice);
    }
    Ok(q)
}

fn initial_slice(problem: &MfgProblem, grid: &SpaceTimeGrid) -> Vec<f64> {
    (0..grid.space_len()).map(|i| problem.initial_density(&grid.point(i))).collect()
}

fn solve_fp(problem: &MfgProblem, stencil: &Stencil, q: &GridField, cfg: &FdConfig) -> Result<GridField> {
    let grid = *stencil.grid();
    let mut rho = GridField::zeros(grid, 1);
    rho.slice_mut(0).copy_from_slice(&initial_slice(problem, &grid));
    for n in 0..grid.steps {
        let next = fp_step_implicit(stencil, rho.slice(n), q.slice(n + 1), problem.nu, cfg)?;
        rho.slice_mut(n + 1).copy_from_slice(&next);
    }
    Ok(rho)
}

fn terminal_slice(problem: &MfgProblem, grid: &SpaceTimeGrid, rho_t: &[f64]) -> Result<Vec<f64>> {
    (0..grid.space_len()).map(|i| problem.terminal_cost(&grid.point(i), rho_t[i])).collect()
}

fn solve_hjb_linear(
    problem: &MfgProblem,
    stencil: &Stencil,
    rho: &GridField,
    q: &GridField,
    cfg: &FdConfig,
) -> Result<GridField> {
    let grid = *stencil.grid();
    let big_n = grid.steps;
    let mut phi = GridField::zeros(grid, 1);
    phi.slice_mut(big_n).copy_from_slice(&terminal_slice(problem, &grid, rho.slice(big_n))?);
    for n in (0..big_n).rev() {
        let next =
            hjb_step_implicit(stencil, problem, phi.slice(n + 1), q.slice(n), rho.slice(n + 1), q.slice(n + 1), cfg)?;
        phi.slice_mut(n).copy_from_slice(&next);
    }
    Ok(phi)
}

/// Sup-norm distances `(rho, phi, q)` between two solutions on the same grid.
pub fn solution_distance(a: &Solution, b: &Solution) -> Result<[f64; 3]> {
    Ok([a.rho.max_abs_diff(&b.rho)?, a.phi.max_abs_diff(&b.phi)?, a.q.max_abs_diff(&b.q)?])
}

/// Runs `cfg.iterations` policy iterations from the initial policy `q0`.
///
/// Returns the last density and value function together with the policy
/// obtained from them.
pub fn run_policy_iteration(
    problem: &MfgProblem,
    grid: &SpaceTimeGrid,
    cfg: &FdConfig,
    q0: &GridField,
    reference: Option<&Solution>,
) -> Result<(Solution, PiHistory)> {
    cfg.validate()?;
    let stencil = check_setup(problem, grid)?;
    if q0.grid() != grid || q0.channels() != grid.dim {
        return Err(MfgError::ShapeMismatch("initial policy does not match the grid".into()));
    }
    let mut history = PiHistory::default();
    let mut q = q0.clone();
    let mut prev_rho = GridField::zeros(*grid, 1);
    let mut prev_phi = GridField::zeros(*grid, 1);
    let mut last = None;
    for k in 0..cfg.iterations {
        let wrap = |e: MfgError| MfgError::PolicyIteration { iteration: k, source: Box::new(e) };
        let rho = solve_fp(problem, &stencil, &q, cfg).map_err(wrap)?;
        let phi = solve_hjb_linear(problem, &stencil, &rho, &q, cfg).map_err(wrap)?;
        let q_next = policy_update_fd(problem, &phi, &rho, cfg.policy_bound).map_err(wrap)?;

        history.change_rho.push(rho.max_abs_diff(&prev_rho)?);
        history.change_phi.push(phi.max_abs_diff(&prev_phi)?);
        history.change_q.push(q_next.max_abs_diff(&q)?);
        let sol = Solution::new(rho.clone(), phi.clone(), q_next.clone())?;
        if let Some(r) = reference {
            history.reference_distance.push(solution_distance(&sol, r)?);
        }
        prev_rho = rho;
        prev_phi = phi;
        q = q_next;
        last = Some(sol);
    }
    let sol = last.expect("at least one iteration");
    if !sol.is_finite() {
        return Err(MfgError::NonFinite { context: "policy iteration".into(), index: cfg.iterations });
    }
    Ok((sol, history))
}

/// `d q_k / d p_k` of the clamped policy at every node and axis. Every
/// catalog policy is affine in `p` with a diagonal slope, so one forward
/// difference with unit step is exact.
fn policy_slope_slice(
    stencil: &Stencil,
    problem: &MfgProblem,
    phi: &[f64],
    rho: &[f64],
    bound: f64,
) -> Result<Vec<f64>> {
    let g = stencil.grid();
    let d = g.dim;
    let nodes = par::try_map_indexed(stencil.len(), |i| {
        let x = g.point(i);
        let mut p = vec![0.0; d];
        stencil.centred_gradient_at(phi, i, &mut p);
        let mut q = vec![0.0; d];
        problem.optimal_policy_into(&x, rho[i], &p, &mut q)?;
        let mut slopes = vec![0.0; d];
        let mut shifted = vec![0.0; d];
        for k in 0..d {
            if q[k].abs() >= bound {
                continue;
            }
            p[k] += 1.0;
            problem.optimal_policy_into(&x, rho[i], &p, &mut shifted)?;
            p[k] -= 1.0;
            slopes[k] = shifted[k] - q[k];
        }
        Ok::<_, MfgError>(slopes)
    })?;
    Ok(nodes.into_iter().flatten().collect())
}

/// One implicit step of the nonlinear HJB equation for a frozen density:
/// `phi_n - dt (nu Lap phi_n - q(phi_n) . D phi_n) = phi_next + dt L(x, rho_next, q_next)`
/// with `q(phi_n)` the policy update of `phi_n` at `rho_n`. A fixed point of
/// the linear step and the policy update solves the same equations.
///
/// Solved by Newton's method with a backtracking line search on the sup norm
/// of the residual; each Newton system is solved matrix-free.
fn hjb_step_nonlinear(
    stencil: &Stencil,
    problem: &MfgProblem,
    phi_next: &[f64],
    rho_n: &[f64],
    rho_next: &[f64],
    q_next: &[f64],
    cfg: &FdConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = stencil.grid();
    let (n, d) = (stencil.len(), g.dim);
    let (dt, nu, bound) = (g.dt, problem.nu, cfg.policy_bound);
    let rhs = par::try_map_indexed(n, |i| {
        let x = g.point(i);
        Ok::<_, MfgError>(phi_next[i] + dt * problem.lagrangian(&x, rho_next[i], &q_next[i * d..(i + 1) * d])?)
    })?;
    let residual = |phi: &[f64]| -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let q = policy_slice(stencil, problem, phi, rho_n, bound)?;
        let mut r = vec![0.0; n];
        par::fill_indexed(&mut r, |i| {
            phi[i] - dt * (nu * stencil.laplacian_at(phi, i) - stencil.upwind_transport_at(phi, &q, i)) - rhs[i]
        });
        let size = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok((r, q, size))
    };

    let mut phi = phi_next.to_vec();
    let (mut r, mut q, mut size) = residual(&phi)?;
    let mut last_update = f64::INFINITY;
    for _ in 0..cfg.hjb_inner_max {
        let slopes = policy_slope_slice(stencil, problem, &phi, rho_n, bound)?;
        let upwind: Vec<f64> = (0..n * d).map(|j| stencil.upwind_difference_at(&phi, &q, j / d, j % d)).collect();
        let lap_diag = 2.0 * d as f64 / (g.h * g.h);
        let diag: Vec<f64> =
            (0..n).map(|i| 1.0 + dt * (nu * lap_diag + stencil.upwind_transport_diag(&q, i))).collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            par::fill_indexed(out, |i| {
                let mut grad = vec![0.0; d];
                stencil.centred_gradient_at(v, i, &mut grad);
                let policy_term: f64 = (0..d).map(|k| slopes[i * d + k] * grad[k] * upwind[i * d + k]).sum();
                v[i] - dt * (nu * stencil.laplacian_at(v, i) - stencil.upwind_transport_at(v, &q, i) - policy_term)
            })
        };
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut step = vec![0.0; n];
        bicgstab(apply, &diag, &minus_r, &mut step, cfg.linear_tol, cfg.max_linear_iters)?;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = phi.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let (tr, tq, ts) = residual(&trial)?;
            if ts < size || ts == 0.0 {
                accepted = Some((trial, tr, tq, ts));
                break;
            }
            t *= 0.5;
        }
        let update = t * step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match accepted {
            Some((trial, tr, tq, ts)) => {
                phi = trial;
                (r, q, size) = (tr, tq, ts);
            }
            // no descent left: the residual is at rounding level
            None => return Ok((phi, q)),
        }
        last_update = update;
        if update < cfg.hjb_inner_tol {
            return Ok((phi, q));
        }
    }
    Err(MfgError::FixedPoint { iterations: cfg.hjb_inner_max, change: last_update })
}

/// Backward sweep of the nonlinear HJB equation for a frozen density.
///
/// Its fixed points are the fixed points of [`run_policy_iteration`].
fn solve_hjb_nonlinear(
    problem: &MfgProblem,
    stencil: &Stencil,
    rho: &GridField,
    cfg: &FdConfig,
) -> Result<(GridField, GridField)> {
    let grid = *stencil.grid();
    let big_n = grid.steps;
    let bound = cfg.policy_bound;
    let mut phi = GridField::zeros(grid, 1);
    let mut q = GridField::zeros(grid, grid.dim);
    let terminal = terminal_slice(problem, &grid, rho.slice(big_n))?;
    let q_terminal = policy_slice(stencil, problem, &terminal, rho.slice(big_n), bound)?;
    phi.slice_mut(big_n).copy_from_slice(&terminal);
    q.slice_mut(big_n).copy_from_slice(&q_terminal);
    for n in (0..big_n).rev() {
        let (current, q_n) = hjb_step_nonlinear(
            stencil,
            problem,
            phi.slice(n + 1),
            rho.slice(n),
            rho.slice(n + 1),
            q.slice(n + 1),
            cfg,
        )?;
        phi.slice_mut(n).copy_from_slice(&current);
        q.slice_mut(n).copy_from_slice(&q_n);
    }
    Ok((phi, q))
}

/// Outcome of [`run_fixed_point`]: the converged triple and the density change per sweep.
#[derive(Clone, Debug)]
pub struct FixedPointRun {
    pub solution: Solution,
    pub changes: Vec<f64>,
}

/// Damped fixed-point iteration on the coupled system.
///
/// Each sweep solves the nonlinear HJB equation for the current density,
/// transports the initial density with the resulting optimal policy and
/// blends `rho <- (1 - delta) rho + delta rho_new`. The returned triple is the
/// density before the final blend with the value function and policy computed
/// from it, so one more sweep moves the density by less than `fp_tol`.
pub fn run_fixed_point(problem: &MfgProblem, grid: &SpaceTimeGrid, cfg: &FdConfig) -> Result<FixedPointRun> {
    cfg.validate()?;
    let stencil = check_setup(problem, grid)?;
    let init = initial_slice(problem, grid);
    let mut rho = GridField::zeros(*grid, 1);
    for n in 0..grid.time_len() {
        rho.slice_mut(n).copy_from_slice(&init);
    }
    let delta = cfg.fp_damping;
    let mut changes = Vec::new();
    for _ in 0..cfg.fp_max_iters {
        let (phi, q) = solve_hjb_nonlinear(problem, &stencil, &rho, cfg)?;
        let rho_new = solve_fp(problem, &stencil, &q, cfg)?;
        let change = rho_new.max_abs_diff(&rho)?;
        changes.push(change);
        if !change.is_finite() {
            break;
        }
        if change < cfg.fp_tol {
            let solution = Solution::new(rho, phi, q)?;
            return Ok(FixedPointRun { solution, changes });
        }
        rho.values_mut().iter_mut().zip(rho_new.values()).for_each(|(r, new)| *r = (1.0 - delta) * *r + delta * new);
    }
    Err(MfgError::FixedPoint { iterations: changes.len(), change: changes.last().copied().unwrap_or(f64::NAN) })
}

/// Piecewise-linear interpolation of a single-channel field at `(t, x)`,
/// periodic in space.
pub fn interpolate(field: &GridField, channel: usize, t: f64, x: &[f64]) -> f64 {
    let g = field.grid();
    let s = (t / g.dt).clamp(0.0, g.steps as f64);
    let n0 = (s.floor() as usize).min(g.steps.saturating_sub(1));
    let wt = s - n0 as f64;
    let d = g.dim;
    let c = field.channels();
    let mut acc = 0.0;
    // multilinear weights over the 2^d surrounding nodes
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let u = (x[k] - g.lo) / g.h;
        let f = u.floor();
        base[k] = (f as isize).rem_euclid(g.nodes as isize) as usize;
        frac[k] = u - f;
    }
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0usize;
        for k in 0..d {
            let bit = (corner >> k) & 1;
            let idx = (base[k] + bit) % g.nodes;
            w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            flat = flat * g.nodes + idx;
        }
        if w == 0.0 {
            continue;
        }
        let v0 = field.slice(n0)[flat * c + channel];
        let v1 = field.slice(n0 + 1)[flat * c + channel];
        acc += w * ((1.0 - wt) * v0 + wt * v1);
    }
    acc
}
