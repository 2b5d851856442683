//! Error norms, distances between sampled solutions, and Savitzky-Golay smoothing.

use crate::error::{MfgError, Result};
use crate::grid::Solution;
use crate::problem::{analytic_phi, analytic_rho, AnalyticParams, MfgProblem};

/// Norm used by [`relative_error`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L2,
    Max,
}

/// `|pred - reference| / |reference|` in the chosen norm.
pub fn relative_error(pred: &[f64], reference: &[f64], norm: Norm) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(MfgError::ShapeMismatch(format!(
            "prediction has {} values, reference {}",
            pred.len(),
            reference.len()
        )));
    }
    let (num, den) = match norm {
        Norm::L2 => {
            let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
            let den: f64 = reference.iter().map(|r| r * r).sum();
            (num.sqrt(), den.sqrt())
        }
        Norm::Max => (
            pred.iter().zip(reference).fold(0.0f64, |m, (p, r)| m.max((p - r).abs())),
            reference.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        ),
    };
    if den == 0.0 {
        return Err(MfgError::InvalidParameter("reference has zero norm".into()));
    }
    Ok(num / den)
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MfgError::ShapeMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
}

/// Nodewise sup distance per field `(rho, phi, q)`; `q` is maximized over components.
pub fn linf_distance(a: &Solution, b: &Solution) -> Result<[f64; 3]> {
    if a.grid() != b.grid() {
        return Err(MfgError::ShapeMismatch("solutions live on different grids".into()));
    }
    Ok([a.rho.max_abs_diff(&b.rho)?, a.phi.max_abs_diff(&b.phi)?, a.q.max_abs_diff(&b.q)?])
}

/// Relative errors of a density and value function against a reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorReport {
    pub rel_err_rho: f64,
    pub rel_err_phi: f64,
    pub times: usize,
    pub points: usize,
}

/// Evaluation grid: `times` instants on `[0, T]` and `points` nodes along the
/// first coordinate of `[lo, hi]`, both endpoints included. Other coordinates
/// sit at the domain centre.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl EvalGrid {
    pub fn new(problem: &MfgProblem, times: usize, points: usize) -> Result<Self> {
        if times < 2 || points < 2 {
            return Err(MfgError::InvalidGrid("evaluation grid needs at least 2 x 2 nodes".into()));
        }
        let ts = (0..times).map(|n| problem.horizon * n as f64 / (times - 1) as f64).collect();
        let c = problem.centre();
        let ps = (0..points)
            .map(|i| {
                let mut x = vec![c; problem.dim];
                x[0] = problem.lo + (problem.hi - problem.lo) * i as f64 / (points - 1) as f64;
                x
            })
            .collect();
        Ok(Self { times: ts, points: ps })
    }

    /// The 100 x 100 grid used for reported errors.
    pub fn standard(problem: &MfgProblem) -> Self {
        Self::new(problem, 100, 100).expect("100 x 100 is a valid grid")
    }

    pub fn len(&self) -> usize {
        self.times.len() * self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All `(t, x)` pairs, time-major.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times.iter().flat_map(move |&t| self.points.iter().map(move |x| (t, x.as_slice())))
    }

    /// Samples `f` at every node, time-major.
    pub fn sample<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, &[f64]) -> Result<f64>,
    {
        self.nodes().map(|(t, x)| f(t, x)).collect()
    }
}

/// Relative L2 errors of `(rho, phi)` sampled from `predict` against the
/// closed-form separable solution on the standard evaluation grid.
pub fn analytic_relative_errors<F>(problem: &MfgProblem, predict: F) -> Result<ErrorReport>
where
    F: Fn(f64, &[f64]) -> Result<(f64, f64)>,
{
    let params = AnalyticParams::for_problem(problem)?;
    let grid = EvalGrid::standard(problem);
    let pred: Vec<(f64, f64)> = grid.nodes().map(|(t, x)| predict(t, x)).collect::<Result<_>>()?;
    let rho = grid.sample(|t, x| analytic_rho(t, x, &params, problem))?;
    let phi = grid.sample(|t, x| analytic_phi(t, x, &params, problem))?;
    let pr: Vec<f64> = pred.iter().map(|p| p.0).collect();
    let pp: Vec<f64> = pred.iter().map(|p| p.1).collect();
    Ok(ErrorReport {
        rel_err_rho: relative_error(&pr, &rho, Norm::L2)?,
        rel_err_phi: relative_error(&pp, &phi, Norm::L2)?,
        times: grid.times.len(),
        points: grid.points.len(),
    })
}

/// Relative L2 error per time slice of two time-major samples on `grid`.
pub fn per_slice_relative_error(grid: &EvalGrid, pred: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != grid.len() || reference.len() != grid.len() {
        return Err(MfgError::ShapeMismatch("samples do not match the evaluation grid".into()));
    }
    let m = grid.points.len();
    (0..grid.times.len())
        .map(|n| relative_error(&pred[n * m..(n + 1) * m], &reference[n * m..(n + 1) * m], Norm::L2))
        .collect()
}

/// Savitzky-Golay smoothing: each output is the value at that position of
/// the least-squares polynomial of degree `polyorder` fitted over a window of
/// `window` samples. Interior windows are centred; near the ends the window
/// is shifted to stay inside the series.
pub fn savgol(series: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window <= polyorder {
        return Err(MfgError::InvalidParameter(format!(
            "savgol needs an odd window larger than the order, got window {window}, order {polyorder}"
        )));
    }
    if series.len() < window {
        return Err(MfgError::InvalidParameter(format!(
            "series of length {} is shorter than the window {window}",
            series.len()
        )));
    }
    let half = window / 2;
    let n = series.len();
    let centred = fit_weights(window, polyorder, half);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let start = i.saturating_sub(half).min(n - window);
        let w = if start + half == i { centred.clone() } else { fit_weights(window, polyorder, i - start) };
        out.push(w.iter().zip(&series[start..start + window]).map(|(a, b)| a * b).sum());
    }
    Ok(out)
}

/// Weights `w` with `sum_j w_j y_j` the least-squares polynomial at sample `at`.
fn fit_weights(window: usize, order: usize, at: usize) -> Vec<f64> {
    let m = order + 1;
    let scale = (window / 2).max(1) as f64;
    let u = |j: usize| (j as f64 - at as f64) / scale;
    // normal matrix of the scaled Vandermonde system
    let mut a = vec![0.0; m * m];
    for j in 0..window {
        let uj = u(j);
        for r in 0..m {
            for c in 0..m {
                a[r * m + c] += uj.powi((r + c) as i32);
            }
        }
    }
    // the fitted value at `at` is c_0, so solve A z = e_0 and weight by the Vandermonde rows
    let mut e0 = vec![0.0; m];
    e0[0] = 1.0;
    let z = solve_dense(a, e0, m);
    (0..window)
        .map(|j| {
            let uj = u(j);
            (0..m).map(|r| z[r] * uj.powi(r as i32)).sum()
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap_or(col);
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x
}
