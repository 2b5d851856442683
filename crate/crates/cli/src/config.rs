//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use mfg_core::dpi::TrainConfig;
use mfg_core::fd::FdConfig;
use mfg_core::{Boundary, HamiltonianKind, MfgProblem};

/// Every accepted key, in the order the manifest lists them.
pub const KEYS: [&str; 30] = [
    "problem",
    "dim",
    "solver",
    "reference",
    "seed",
    "out",
    "gamma",
    "clamp_rho0",
    "analytic_rho0",
    "policy_bound",
    "nodes",
    "steps",
    "pi_iterations",
    "q0",
    "linear_tol",
    "max_linear_iters",
    "fp_damping",
    "fp_tol",
    "fp_max_iters",
    "ref_nodes",
    "ref_steps",
    "iterations",
    "batch",
    "cond_batch",
    "inner_steps",
    "lr",
    "weight_decay",
    "eval_every",
    "slice_times",
    "slice_points",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    Dpi,
    PiFd,
    FixedPoint,
}

impl Solver {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "dpi" => Ok(Self::Dpi),
            "pi_fd" => Ok(Self::PiFd),
            "fixed_point" => Ok(Self::FixedPoint),
            other => bail!("unknown solver `{other}` (expected dpi, pi_fd or fixed_point)"),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dpi => "dpi",
            Self::PiFd => "pi_fd",
            Self::FixedPoint => "fixed_point",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    Analytic,
    FixedPoint,
    None,
}

impl ReferenceKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "fixed_point" => Ok(Self::FixedPoint),
            "none" => Ok(Self::None),
            other => bail!("unknown reference `{other}` (expected analytic, fixed_point or none)"),
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::FixedPoint => "fixed_point",
            Self::None => "none",
        })
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: MfgProblem,
    pub solver: Solver,
    pub reference: ReferenceKind,
    pub seed: u64,
    pub out: PathBuf,
    pub fd: FdConfig,
    pub nodes: usize,
    pub steps: usize,
    /// Constant initial policy for `pi_fd`.
    pub q0: f64,
    /// Grid of the fixed-point reference.
    pub ref_nodes: usize,
    pub ref_steps: usize,
    pub train: TrainConfig,
    /// Size of the `(t, x1)` slice written for `dpi` when `dim > 2`.
    pub slice_times: usize,
    pub slice_points: usize,
}

/// Raw entries of a config file.
fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            bail!("line {}: unknown key `{k}`", i + 1);
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            bail!("line {}: duplicate key `{k}`", i + 1);
        }
    }
    Ok(map)
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| anyhow!("key `{key}`: cannot parse `{v}`: {e}")),
        }
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| anyhow!("missing required key `{key}`"))
    }
}

impl ExperimentConfig {
    /// Parses and validates a config file. `seed` overrides the file's seed.
    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self> {
        let e = Entries(parse_entries(text)?);
        let name = e.required("problem")?;
        let dim = e.get("dim", 1usize)?;
        let solver = Solver::parse(e.required("solver")?)?;
        let mut problem = MfgProblem::preset(name, dim)?
            .with_gamma(e.get("gamma", 0.0)?)
            .with_clamp_rho0(e.get("clamp_rho0", false)?)
            .with_analytic_rho0(e.get("analytic_rho0", false)?);
        if problem.gamma < 0.0 {
            bail!("gamma must be nonnegative");
        }
        let default_ref = if problem.kind == HamiltonianKind::SeparableLq { "analytic" } else { "none" };
        let reference = ReferenceKind::parse(e.0.get("reference").map_or(default_ref, String::as_str))?;

        let uses_fd = solver != Solver::Dpi || reference == ReferenceKind::FixedPoint;
        if uses_fd {
            if dim > 2 {
                bail!("finite-difference solvers support dimension 1 or 2, got dimension {dim}");
            }
            problem = problem.with_boundary(Boundary::Periodic);
        }
        if reference == ReferenceKind::Analytic && problem.kind != HamiltonianKind::SeparableLq {
            bail!("the analytic reference exists only for the lq problem");
        }
        if reference == ReferenceKind::FixedPoint && solver == Solver::FixedPoint {
            bail!("the fixed_point solver cannot use itself as reference");
        }

        let defaults = FdConfig::default();
        let fd = FdConfig {
            iterations: e.get("pi_iterations", defaults.iterations)?,
            linear_tol: e.get("linear_tol", defaults.linear_tol)?,
            max_linear_iters: e.get("max_linear_iters", defaults.max_linear_iters)?,
            policy_bound: e.get("policy_bound", defaults.policy_bound)?,
            fp_damping: e.get("fp_damping", defaults.fp_damping)?,
            fp_tol: e.get("fp_tol", defaults.fp_tol)?,
            fp_max_iters: e.get("fp_max_iters", defaults.fp_max_iters)?,
            ..defaults
        };
        fd.validate()?;
        let nodes = e.get("nodes", 100usize)?;
        let steps = e.get("steps", 100usize)?;

        let seed = match seed {
            Some(s) => s,
            None => e.get("seed", 0u64)?,
        };
        let preset = TrainConfig::for_problem(&problem);
        let train = TrainConfig {
            iterations: e.get("iterations", preset.iterations)?,
            batch: e.get("batch", preset.batch)?,
            cond_batch: e.get("cond_batch", preset.cond_batch)?,
            inner_steps: e.get("inner_steps", preset.inner_steps)?,
            lr: e.get("lr", preset.lr)?,
            weight_decay: e.get("weight_decay", preset.weight_decay)?,
            eval_every: e.get("eval_every", preset.eval_every)?,
            seed,
            ..preset
        };
        if solver == Solver::Dpi {
            train.validate(&problem)?;
        }

        let cfg = Self {
            problem,
            solver,
            reference,
            seed,
            out: PathBuf::from(e.get("out", "out".to_string())?),
            fd,
            nodes,
            steps,
            q0: e.get("q0", 0.0)?,
            ref_nodes: e.get("ref_nodes", nodes)?,
            ref_steps: e.get("ref_steps", steps)?,
            train,
            slice_times: e.get("slice_times", 101usize)?,
            slice_points: e.get("slice_points", 101usize)?,
        };
        for (key, v) in [
            ("nodes", cfg.nodes),
            ("ref_nodes", cfg.ref_nodes),
            ("slice_times", cfg.slice_times),
            ("slice_points", cfg.slice_points),
        ] {
            if v < 2 {
                bail!("`{key}` must be at least 2");
            }
        }
        if cfg.steps == 0 || cfg.ref_steps == 0 {
            bail!("`steps` and `ref_steps` must be at least 1");
        }
        let same_grid = cfg.ref_nodes == cfg.nodes && cfg.ref_steps == cfg.steps;
        if solver == Solver::PiFd && reference == ReferenceKind::FixedPoint && !same_grid {
            bail!("pi_fd compares against a fixed-point reference on its own grid; drop ref_nodes/ref_steps");
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, seed)
    }

    /// Resolved value of every key in [`KEYS`], defaults included.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (p, fd, t) = (&self.problem, &self.fd, &self.train);
        let values = [
            p.name.clone(),
            p.dim.to_string(),
            self.solver.to_string(),
            self.reference.to_string(),
            self.seed.to_string(),
            self.out.display().to_string(),
            p.gamma.to_string(),
            p.clamp_rho0.to_string(),
            p.analytic_rho0.to_string(),
            fd.policy_bound.to_string(),
            self.nodes.to_string(),
            self.steps.to_string(),
            fd.iterations.to_string(),
            self.q0.to_string(),
            fd.linear_tol.to_string(),
            fd.max_linear_iters.to_string(),
            fd.fp_damping.to_string(),
            fd.fp_tol.to_string(),
            fd.fp_max_iters.to_string(),
            self.ref_nodes.to_string(),
            self.ref_steps.to_string(),
            t.iterations.to_string(),
            t.batch.to_string(),
            t.cond_batch.to_string(),
            t.inner_steps.to_string(),
            t.lr.to_string(),
            t.weight_decay.to_string(),
            t.eval_every.to_string(),
            self.slice_times.to_string(),
            self.slice_points.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}
