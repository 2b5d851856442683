//! Runs one configured experiment and writes its artifacts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use mfg_core::dpi::{dpi_train, DpiNetworks, Reference};
use mfg_core::fd::{interpolate, run_fixed_point, run_policy_iteration, solution_distance, uniform_grid};
use mfg_core::io::{
    dpi_history_rows, history_to_csv, pi_history_rows, samples_to_csv, solution_to_csv, HistoryRow, SolutionSample,
};
use mfg_core::metrics::{analytic_relative_errors, EvalGrid};
use mfg_core::nn::checkpoint;
use mfg_core::problem::{analytic_phi, analytic_rho, AnalyticParams};
use mfg_core::{GridField, MfgProblem, Solution, SpaceTimeGrid};
use serde_json::json;

use crate::config::{ExperimentConfig, ReferenceKind, Solver};

/// Why a run stopped.
#[derive(Debug)]
pub enum RunError {
    /// Bad configuration or unusable output directory.
    Config(anyhow::Error),
    /// The solver itself failed.
    Solver(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Solver(_) => 2,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e:#}"),
            Self::Solver(e) => write!(f, "solver failure: {e:#}"),
        }
    }
}

struct Artifacts {
    history: Vec<HistoryRow>,
    solution_csv: String,
    networks: Option<DpiNetworks>,
}

/// The closed-form solution sampled on the nodes of `grid`.
fn analytic_on_grid(problem: &MfgProblem, grid: &SpaceTimeGrid) -> Result<Solution> {
    let params = AnalyticParams::for_problem(problem)?;
    let d = grid.dim;
    let (mut rho, mut phi, mut q) = (Vec::new(), Vec::new(), Vec::new());
    for n in 0..grid.time_len() {
        for s in 0..grid.space_len() {
            let x = grid.point(s);
            rho.push(analytic_rho(grid.time(n), &x, &params, problem)?);
            phi.push(analytic_phi(grid.time(n), &x, &params, problem)?);
            q.extend(x.iter().map(|v| params.alpha * v));
        }
    }
    Ok(Solution::new(
        GridField::from_values(*grid, 1, rho)?,
        GridField::from_values(*grid, 1, phi)?,
        GridField::from_values(*grid, d, q)?,
    )?)
}

fn fixed_point_reference(cfg: &ExperimentConfig) -> Result<Solution> {
    let grid = uniform_grid(&cfg.problem, cfg.ref_nodes, cfg.ref_steps)?;
    Ok(run_fixed_point(&cfg.problem, &grid, &cfg.fd).context("fixed-point reference")?.solution)
}

/// Relative errors of a grid solution against the closed form, through interpolation.
fn grid_relative_errors(problem: &MfgProblem, sol: &Solution) -> Result<[f64; 2]> {
    let report =
        analytic_relative_errors(problem, |t, x| Ok((interpolate(&sol.rho, 0, t, x), interpolate(&sol.phi, 0, t, x))))?;
    Ok([report.rel_err_rho, report.rel_err_phi])
}

fn run_pi(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let grid = uniform_grid(&cfg.problem, cfg.nodes, cfg.steps)?;
    let reference = match cfg.reference {
        ReferenceKind::Analytic => Some(analytic_on_grid(&cfg.problem, &grid)?),
        ReferenceKind::FixedPoint => Some(fixed_point_reference(cfg)?),
        ReferenceKind::None => None,
    };
    let q0 = GridField::constant(grid, grid.dim, cfg.q0);
    let (sol, hist) = run_policy_iteration(&cfg.problem, &grid, &cfg.fd, &q0, reference.as_ref())?;
    let mut rows = pi_history_rows(&hist);
    if cfg.reference == ReferenceKind::Analytic {
        let e = grid_relative_errors(&cfg.problem, &sol)?;
        rows.last_mut().expect("at least one iteration").relerr = e.map(Some);
    }
    Ok(Artifacts { history: rows, solution_csv: solution_to_csv(&sol), networks: None })
}

fn run_fp(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let grid = uniform_grid(&cfg.problem, cfg.nodes, cfg.steps)?;
    let run = run_fixed_point(&cfg.problem, &grid, &cfg.fd)?;
    let mut rows: Vec<HistoryRow> = run
        .changes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut row = HistoryRow::new(k);
            row.linf[0] = Some(*c);
            row
        })
        .collect();
    if cfg.reference == ReferenceKind::Analytic {
        let exact = analytic_on_grid(&cfg.problem, &grid)?;
        let last = rows.last_mut().expect("at least one sweep");
        last.linf = solution_distance(&run.solution, &exact)?.map(Some);
        last.relerr = grid_relative_errors(&cfg.problem, &run.solution)?.map(Some);
    }
    Ok(Artifacts { history: rows, solution_csv: solution_to_csv(&run.solution), networks: None })
}

fn run_dpi(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let p = &cfg.problem;
    let grid_ref = match cfg.reference {
        ReferenceKind::FixedPoint => Some(fixed_point_reference(cfg)?),
        _ => None,
    };
    let reference = match (&grid_ref, cfg.reference) {
        (Some(sol), _) => Reference::Grid(sol),
        (None, ReferenceKind::Analytic) => Reference::Analytic,
        _ => Reference::None,
    };
    let run = dpi_train(p, &cfg.train, reference)?;
    let rows = dpi_history_rows(&run.history);
    let nets = run.state.nets;
    let solution_csv = if p.dim <= 2 {
        let grid = uniform_grid(p, cfg.nodes, cfg.steps)?;
        solution_to_csv(&nets.sample_on_grid(&grid)?)
    } else {
        let slice = EvalGrid::new(p, cfg.slice_times, cfg.slice_points)?;
        let samples = slice
            .nodes()
            .map(|(t, x)| {
                let (rho, phi, q) = nets.evaluate(t, x)?;
                Ok(SolutionSample { t, x: x.to_vec(), rho, phi, q })
            })
            .collect::<mfg_core::Result<Vec<_>>>()?;
        samples_to_csv(p.dim, &samples)?
    };
    Ok(Artifacts { history: rows, solution_csv, networks: Some(nets) })
}

/// Runs the experiment and writes `history.csv`, `solution.csv` and
/// `manifest.json` (plus network checkpoints for `dpi`) into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, threads: usize, deterministic: bool) -> Result<(), RunError> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(RunError::Config)?;
    let start = Instant::now();
    let artifacts = match cfg.solver {
        Solver::PiFd => run_pi(cfg),
        Solver::FixedPoint => run_fp(cfg),
        Solver::Dpi => run_dpi(cfg),
    }
    .map_err(RunError::Solver)?;
    let wall = start.elapsed().as_secs_f64();

    let write = |name: &str, text: &str| {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display())).map_err(RunError::Config)
    };
    write("history.csv", &history_to_csv(&artifacts.history))?;
    write("solution.csv", &artifacts.solution_csv)?;
    if let Some(nets) = &artifacts.networks {
        for (name, net) in [("rho.net", &nets.rho), ("phi.net", &nets.phi), ("q.net", &nets.q)] {
            write(name, &checkpoint::to_string(net))?;
        }
    }
    let config: serde_json::Map<String, serde_json::Value> =
        cfg.entries().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let manifest = json!({
        "config": config,
        "seed": cfg.seed,
        "versions": { "mfg": env!("CARGO_PKG_VERSION"), "mfg-core": mfg_core::VERSION },
        "threads": threads,
        "deterministic": deterministic,
        "wall_time_seconds": wall,
    });
    write("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))
}
