//! CSV encoding of solutions and convergence histories.
//!
//! Reals are written as `{:.16e}` (17 significant digits), so every `f64`
//! survives a write/read cycle bit for bit.

use std::fmt::Write as _;

use crate::dpi::ConvergenceHistory;
use crate::error::{MfgError, Result};
use crate::fd::PiHistory;
use crate::grid::{GridField, Solution, SpaceTimeGrid};

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| MfgError::Parse(format!("line {line}: `{s}` is not a number")))
}

/// Columns of `history.csv`.
pub const HISTORY_COLUMNS: [&str; 9] =
    ["iter", "loss_fp", "loss_hjb", "loss_policy", "linf_rho", "linf_phi", "linf_q", "relerr_rho", "relerr_phi"];

fn history_header() -> String {
    HISTORY_COLUMNS.join(",")
}

/// One row of `history.csv`; absent metrics are written as empty cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: [Option<f64>; 3],
    pub linf: [Option<f64>; 3],
    pub relerr: [Option<f64>; 2],
}

impl HistoryRow {
    pub fn new(iter: usize) -> Self {
        Self { iter, ..Self::default() }
    }

    fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.loss.iter().chain(&self.linf).chain(&self.relerr).copied()
    }
}

/// One row per training iteration; evaluation rows also carry the distances
/// and relative errors.
pub fn dpi_history_rows(h: &ConvergenceHistory) -> Vec<HistoryRow> {
    let mut rows: Vec<HistoryRow> = (0..h.len())
        .map(|k| {
            let mut row = HistoryRow::new(k);
            row.loss = [Some(h.loss_fp[k]), Some(h.loss_hjb[k]), Some(h.loss_policy[k])];
            row
        })
        .collect();
    for e in &h.evals {
        if let Some(row) = rows.get_mut(e.iteration) {
            row.linf = e.linf.map(Some);
            row.relerr = e.relerr;
        }
    }
    rows
}

/// One row per policy iteration. The sup columns hold the distance to the
/// reference when there was one, and the change against the previous iterate
/// otherwise.
pub fn pi_history_rows(h: &PiHistory) -> Vec<HistoryRow> {
    (0..h.len())
        .map(|k| {
            let mut row = HistoryRow::new(k);
            row.linf = match h.reference_distance.get(k) {
                Some(d) => d.map(Some),
                None => [Some(h.change_rho[k]), Some(h.change_phi[k]), Some(h.change_q[k])],
            };
            row
        })
        .collect()
}

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut out = history_header();
    out.push('\n');
    for row in rows {
        out.push_str(&history_line(row));
    }
    out
}

/// One row with its trailing newline, for streaming.
pub fn history_line(row: &HistoryRow) -> String {
    let mut line = row.iter.to_string();
    for cell in row.cells() {
        line.push(',');
        if let Some(v) = cell {
            line.push_str(&fmt_real(v));
        }
    }
    line.push('\n');
    line
}

pub fn history_header_line() -> String {
    history_header() + "\n"
}

pub fn history_from_csv(text: &str) -> Result<Vec<HistoryRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(history_header().as_str()) {
        return Err(MfgError::Parse("history header does not match".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(MfgError::Parse(format!("line {}: expected 9 cells, got {}", i + 2, cells.len())));
        }
        let iter = cells[0].trim().parse().map_err(|_| MfgError::Parse(format!("line {}: bad iteration", i + 2)))?;
        let opt = |s: &str| {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                parse_real(s, i + 2).map(Some)
            }
        };
        let mut row = HistoryRow::new(iter);
        for k in 0..3 {
            row.loss[k] = opt(cells[1 + k])?;
            row.linf[k] = opt(cells[4 + k])?;
        }
        for k in 0..2 {
            row.relerr[k] = opt(cells[7 + k])?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn solution_header(dim: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dim).map(|k| format!("x{k}")));
    cols.push("rho".into());
    cols.push("phi".into());
    cols.extend((1..=dim).map(|k| format!("q{k}")));
    cols.join(",")
}

/// `t, x1..xd, rho, phi, q1..qd`, one row per node, time-major.
pub fn solution_to_csv(sol: &Solution) -> String {
    let g = sol.grid();
    let d = g.dim;
    let mut out = solution_header(d);
    out.push('\n');
    let mut x = vec![0.0; d];
    for n in 0..g.time_len() {
        let (rho, phi, q) = (sol.rho.slice(n), sol.phi.slice(n), sol.q.slice(n));
        for s in 0..g.space_len() {
            g.point_into(s, &mut x);
            let _ = write!(out, "{}", fmt_real(g.time(n)));
            for v in x.iter().chain([&rho[s], &phi[s]]).chain(&q[s * d..(s + 1) * d]) {
                let _ = write!(out, ",{}", fmt_real(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// One node of a sampled solution, for outputs that are not a full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: f64,
    pub phi: f64,
    pub q: Vec<f64>,
}

/// Same columns as [`solution_to_csv`], one row per sample.
pub fn samples_to_csv(dim: usize, samples: &[SolutionSample]) -> Result<String> {
    let mut out = solution_header(dim);
    out.push('\n');
    for s in samples {
        if s.x.len() != dim || s.q.len() != dim {
            return Err(MfgError::ShapeMismatch(format!("sample at t = {} is not {dim}-dimensional", s.t)));
        }
        let _ = write!(out, "{}", fmt_real(s.t));
        for v in s.x.iter().chain([&s.rho, &s.phi]).chain(&s.q) {
            let _ = write!(out, ",{}", fmt_real(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Reads a solution written by [`solution_to_csv`] on `grid`. Node
/// coordinates in the file must match the grid's.
pub fn solution_from_csv(text: &str, grid: &SpaceTimeGrid) -> Result<Solution> {
    let d = grid.dim;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(solution_header(d).as_str()) {
        return Err(MfgError::Parse(format!("solution header does not match a {d}-dimensional grid")));
    }
    let total = grid.time_len() * grid.space_len();
    let mut rho = Vec::with_capacity(total);
    let mut phi = Vec::with_capacity(total);
    let mut q = Vec::with_capacity(total * d);
    let mut x = vec![0.0; d];
    for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        if k >= total {
            return Err(MfgError::Parse(format!("more than {total} rows")));
        }
        let vals = line.split(',').map(|c| parse_real(c, k + 2)).collect::<Result<Vec<f64>>>()?;
        if vals.len() != 2 * d + 3 {
            return Err(MfgError::Parse(format!("line {}: expected {} cells", k + 2, 2 * d + 3)));
        }
        let (n, s) = (k / grid.space_len(), k % grid.space_len());
        grid.point_into(s, &mut x);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        if !close(vals[0], grid.time(n)) || !x.iter().zip(&vals[1..=d]).all(|(a, b)| close(*b, *a)) {
            return Err(MfgError::Parse(format!("line {}: node does not match the grid", k + 2)));
        }
        rho.push(vals[d + 1]);
        phi.push(vals[d + 2]);
        q.extend_from_slice(&vals[d + 3..]);
    }
    if rho.len() != total {
        return Err(MfgError::Parse(format!("expected {total} rows, found {}", rho.len())));
    }
    Solution::new(
        GridField::from_values(*grid, 1, rho)?,
        GridField::from_values(*grid, 1, phi)?,
        GridField::from_values(*grid, d, q)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use proptest::prelude::*;

    fn random_solution(seed: u64, dim: usize) -> Solution {
        use rand::{Rng, SeedableRng};
        let g = SpaceTimeGrid::new(dim, -1.0, 2.0, 0.7, 3, 2, Boundary::Periodic).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut field = |c: usize| {
            let n = g.time_len() * g.space_len() * c;
            GridField::from_values(
                g,
                c,
                (0..n).map(|_| rng.gen::<f64>() * 10f64.powi(rng.gen_range(-300..300))).collect(),
            )
            .unwrap()
        };
        Solution::new(field(1), field(1), field(dim)).unwrap()
    }

    proptest! {
        #[test]
        fn solution_round_trip_is_exact(seed in 0u64..500, dim in 1usize..3) {
            let sol = random_solution(seed, dim);
            let back = solution_from_csv(&solution_to_csv(&sol), sol.grid()).unwrap();
            prop_assert_eq!(back, sol);
        }

        #[test]
        fn real_format_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt_real(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn solution_header_and_shape() {
        let sol = random_solution(1, 2);
        let text = solution_to_csv(&sol);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,rho,phi,q1,q2"));
        assert_eq!(lines.count(), 3 * 9);
    }

    #[test]
    fn solution_reader_rejects_mismatches() {
        let sol = random_solution(2, 1);
        let text = solution_to_csv(&sol);
        let other = SpaceTimeGrid::new(1, 0.0, 1.0, 0.7, 3, 2, Boundary::Periodic).unwrap();
        assert!(solution_from_csv(&text, &other).is_err());
        let short: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(solution_from_csv(&short, sol.grid()).is_err());
    }

    #[test]
    fn samples_use_the_solution_layout() {
        let sol = random_solution(3, 1);
        let g = sol.grid();
        let samples: Vec<SolutionSample> = (0..g.time_len())
            .flat_map(|n| (0..g.space_len()).map(move |s| (n, s)))
            .map(|(n, s)| SolutionSample {
                t: g.time(n),
                x: g.point(s),
                rho: sol.rho.slice(n)[s],
                phi: sol.phi.slice(n)[s],
                q: vec![sol.q.slice(n)[s]],
            })
            .collect();
        assert_eq!(samples_to_csv(1, &samples).unwrap(), solution_to_csv(&sol));
        assert!(samples_to_csv(2, &samples).is_err());
    }

    #[test]
    fn history_round_trip_with_gaps() {
        let mut a = HistoryRow::new(0);
        a.loss = [Some(1.5), Some(0.25), Some(1e-300)];
        let mut b = HistoryRow::new(99);
        b.loss = [Some(0.1), Some(0.2), Some(0.3)];
        b.linf = [Some(1.0), None, Some(3.0)];
        b.relerr = [Some(0.01), Some(0.02)];
        let text = history_to_csv(&[a.clone(), b.clone()]);
        assert!(text.starts_with("iter,loss_fp,loss_hjb,loss_policy,linf_rho,linf_phi,linf_q,relerr_rho,relerr_phi\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",,,,,"));
        assert_eq!(history_from_csv(&text).unwrap(), vec![a, b]);
        assert!(history_from_csv("iter,bogus\n").is_err());
    }
}
