//! Matrix-free BiCGSTAB with Jacobi preconditioning.

use crate::error::{MfgError, Result};

/// Result of a converged solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Iterations per BiCGSTAB cycle before restarting from the true residual.
const RESTART: usize = 200;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` given `apply(x, out) = A x` and the diagonal of `A`.
///
/// `x` holds the initial guess on entry. Stops when `|b - A x| <= tol |b|`.
/// The iteration restarts from the true residual when it breaks down or
/// stagnates.
pub fn bicgstab<F>(apply: F, diag: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iters: usize) -> Result<SolveStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let target = tol * norm(b);
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64]| {
        apply(x, r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        norm(r)
    };
    let mut res = true_residual(x, &mut r);
    let mut used = 0;
    while used < max_iters {
        if res <= target {
            return Ok(SolveStats { iterations: used, residual: res });
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        let start_res = res;
        let cycle = (max_iters - used).min(RESTART);
        for _ in 0..cycle {
            used += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = p[i] * inv_diag[i];
            }
            apply(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 {
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                break;
            }
            for i in 0..n {
                z[i] = s[i] * inv_diag[i];
            }
            apply(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= target {
                break;
            }
        }
        res = true_residual(x, &mut r);
        if res <= target {
            return Ok(SolveStats { iterations: used, residual: res });
        }
        if !(res < start_res) {
            break;
        }
    }
    Err(MfgError::LinearSolve { iterations: used, residual: res })
}

/// Direct solve of a periodic tridiagonal system
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` (indices mod n),
/// by the Thomas algorithm with a Sherman-Morrison correction for the corners.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n || n < 2 {
        return Err(MfgError::ShapeMismatch("cyclic tridiagonal: inconsistent lengths".into()));
    }
    if n == 2 {
        // both off-diagonals couple the same pair of nodes
        let (a, b, c, d) = (diag[0], lower[0] + upper[0], lower[1] + upper[1], diag[1]);
        let det = a * d - b * c;
        if det == 0.0 {
            return Err(MfgError::LinearSolve { iterations: 0, residual: f64::INFINITY });
        }
        return Ok(vec![(d * rhs[0] - b * rhs[1]) / det, (a * rhs[1] - c * rhs[0]) / det]);
    }
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= lower[0] * upper[n - 1] / gamma;
    let y = thomas(lower, &bb, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = upper[n - 1];
    let z = thomas(lower, &bb, upper, &u)?;
    let vy = y[0] + lower[0] / gamma * y[n - 1];
    let vz = z[0] + lower[0] / gamma * z[n - 1];
    let factor = vy / (1.0 + vz);
    Ok(y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect())
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(MfgError::LinearSolve { iterations: 0, residual: f64::INFINITY });
    }
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta == 0.0 {
            return Err(MfgError::LinearSolve { iterations: i, residual: f64::INFINITY });
        }
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i + 1] * next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_cyclic_system() {
        let n = 50;
        // diagonally dominant, nonsymmetric, periodic coupling
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = 4.0 * x[i] - 1.5 * x[(i + 1) % n] - 0.5 * x[(i + n - 1) % n];
            }
        };
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&exact, &mut b);
        let mut x = vec![0.0; n];
        let stats = bicgstab(apply, &vec![4.0; n], &b, &mut x, 1e-13, 200).unwrap();
        assert!(stats.residual < 1e-12);
        let err = x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11);
    }

    #[test]
    fn cyclic_tridiagonal_matches_dense_product() {
        for n in [2usize, 3, 7, 40] {
            let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
            let upper: Vec<f64> = (0..n).map(|i| -0.6 + 0.005 * i as f64).collect();
            let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * (i % 3) as f64).collect();
            let exact: Vec<f64> = (0..n).map(|i| (1.0 + i as f64).ln()).collect();
            let rhs: Vec<f64> = (0..n)
                .map(|i| lower[i] * exact[(i + n - 1) % n] + diag[i] * exact[i] + upper[i] * exact[(i + 1) % n])
                .collect();
            let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
            let err = x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-13, "n = {n}: {err}");
        }
    }

    #[test]
    fn reports_non_convergence() {
        let apply = |x: &[f64], out: &mut [f64]| {
            out[0] = x[0] + 2.0 * x[1];
            out[1] = 2.0 * x[0] + 4.0 * x[1];
        };
        let mut x = vec![0.0; 2];
        let err = bicgstab(apply, &[1.0, 4.0], &[1.0, 0.0], &mut x, 1e-12, 5).unwrap_err();
        assert!(matches!(err, MfgError::LinearSolve { .. }));
    }
}
