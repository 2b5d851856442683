//! Deep policy iteration.
//!
//! Three networks approximate the density `rho(t, x)`, the value function
//! `phi(t, x)` and the policy `q(t, x)`. Every outer iteration draws fresh
//! minibatches and takes Adam steps on
//!
//! 1. the Fokker-Planck residual with the policy frozen, updating `rho`,
//! 2. the HJB residual with the new density and the frozen policy, updating `phi`,
//! 3. the policy residual with the new density and value function, updating `q`.

pub mod loss;
pub mod sampling;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MfgError, Result};
use crate::grid::Solution;
use crate::metrics::{linf_distance, max_abs_diff, relative_error, EvalGrid, Norm};
use crate::nn::{adam_step, Activation, AdamState, Network, NetworkSpec, OutputTransform};
use crate::problem::{analytic_phi, analytic_rho, AnalyticParams, HamiltonianKind, MfgProblem};

pub use loss::{
    fp_residual, hjb_residual, loss_fp, loss_fp_with_grad, loss_hjb, loss_hjb_with_grad, loss_policy,
    loss_policy_with_grad, policy_residuals, DpiNetworks,
};
pub use sampling::{sample_interior, sample_spatial};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Interior batch size `B`.
    pub batch: usize,
    /// Initial/terminal condition batch size `S`.
    pub cond_batch: usize,
    /// Outer iterations `K`.
    pub iterations: usize,
    /// Adam steps per stage and iteration.
    pub inner_steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Seeds the minibatch sampler; the networks use `seed + 1`, `+ 2`, `+ 3`.
    pub seed: u64,
    pub rho_spec: NetworkSpec,
    pub phi_spec: NetworkSpec,
    pub q_spec: NetworkSpec,
    /// Evaluate against the reference every this many iterations (0 = never).
    pub eval_every: usize,
}

impl TrainConfig {
    /// One hidden layer per network: `tanh` for density and policy, `softplus` for the value.
    fn single_layer(dim: usize, batch: usize, width: usize, weight_decay: f64) -> Self {
        Self {
            batch,
            cond_batch: batch,
            iterations: 20_000,
            inner_steps: 1,
            lr: 1e-4,
            weight_decay,
            seed: 0,
            rho_spec: NetworkSpec::new(dim, 1, vec![width], Activation::Tanh),
            phi_spec: NetworkSpec::new(dim, 1, vec![width], Activation::Softplus),
            q_spec: NetworkSpec::new(dim, dim, vec![width], Activation::Tanh),
            eval_every: 100,
        }
    }

    /// Separable benchmark without congestion, `d = 1`.
    pub fn test1() -> Self {
        Self::single_layer(1, 50, 100, 1e-3)
    }

    /// Separable benchmark with congestion. The density head is softplus so
    /// that `ln(rho)` stays defined during training.
    pub fn test2() -> Self {
        let mut cfg = Self::test1();
        cfg.rho_spec = cfg.rho_spec.with_output(OutputTransform::Softplus);
        cfg
    }

    /// Separable benchmark in dimension `dim`.
    pub fn test4(dim: usize) -> Self {
        let (batch, width) = match dim {
            0..=2 => (100, 100),
            3..=50 => (500, 200),
            _ => (1000, 256),
        };
        Self::single_layer(dim, batch, width, 1e-4)
    }

    /// Congestion examples in dimension `dim`.
    pub fn example(dim: usize) -> Self {
        let batch = match dim {
            0..=2 => 100,
            3..=10 => 500,
            _ => 1000,
        };
        Self::single_layer(dim, batch, 100, 1e-4)
    }

    /// Traffic flow: three `gelu` layers for the density, one `sin` layer for the others.
    pub fn traffic() -> Self {
        let mut cfg = Self::single_layer(1, 50, 100, 1e-3);
        cfg.rho_spec = NetworkSpec::new(1, 1, vec![100; 3], Activation::Gelu).with_output(OutputTransform::Softplus);
        cfg.phi_spec = NetworkSpec::new(1, 1, vec![100], Activation::Sin);
        cfg.q_spec = NetworkSpec::new(1, 1, vec![100], Activation::Sin);
        cfg
    }

    /// The preset matching a problem.
    pub fn for_problem(problem: &MfgProblem) -> Self {
        let mut cfg = match problem.kind {
            HamiltonianKind::SeparableLq if problem.dim == 1 && problem.gamma == 0.0 => Self::test1(),
            HamiltonianKind::SeparableLq if problem.dim == 1 => Self::test2(),
            HamiltonianKind::SeparableLq => Self::test4(problem.dim),
            HamiltonianKind::Congestion1 | HamiltonianKind::Congestion2 => Self::example(problem.dim),
            HamiltonianKind::TrafficFlow => Self::traffic(),
        };
        let needs_positive = problem.kind == HamiltonianKind::Congestion2
            || (problem.kind == HamiltonianKind::SeparableLq && problem.gamma != 0.0);
        if needs_positive {
            cfg.rho_spec = cfg.rho_spec.with_output(OutputTransform::Softplus);
        }
        cfg
    }

    pub fn validate(&self, problem: &MfgProblem) -> Result<()> {
        if self.batch == 0 || self.cond_batch == 0 || self.iterations == 0 || self.inner_steps == 0 {
            return Err(MfgError::InvalidParameter(
                "batch, cond_batch, iterations and inner_steps must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(MfgError::InvalidParameter("lr must be positive and weight_decay nonnegative".into()));
        }
        let d = problem.dim;
        for (name, spec, out) in [("rho", &self.rho_spec, 1), ("phi", &self.phi_spec, 1), ("q", &self.q_spec, d)] {
            spec.validate()?;
            if spec.input_dim != d + 1 || spec.output_dim != out {
                return Err(MfgError::InvalidParameter(format!(
                    "{name} network maps {} -> {}, problem needs {} -> {out}",
                    spec.input_dim,
                    spec.output_dim,
                    d + 1
                )));
            }
        }
        Ok(())
    }
}

/// Networks and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct DpiState {
    pub nets: DpiNetworks,
    pub adam_rho: AdamState,
    pub adam_phi: AdamState,
    pub adam_q: AdamState,
    /// Completed outer iterations.
    pub iteration: usize,
}

impl DpiState {
    pub fn new(problem: &MfgProblem, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate(problem)?;
        let nets = DpiNetworks {
            rho: Network::new(cfg.rho_spec.clone(), cfg.seed.wrapping_add(1))?,
            phi: Network::new(cfg.phi_spec.clone(), cfg.seed.wrapping_add(2))?,
            q: Network::new(cfg.q_spec.clone(), cfg.seed.wrapping_add(3))?,
        };
        Ok(Self::from_networks(nets))
    }

    pub fn from_networks(nets: DpiNetworks) -> Self {
        Self {
            adam_rho: AdamState::new(nets.rho.num_params()),
            adam_phi: AdamState::new(nets.phi.num_params()),
            adam_q: AdamState::new(nets.q.num_params()),
            nets,
            iteration: 0,
        }
    }
}

/// Evaluation against the reference at one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    /// Sup distances `(rho, phi, q)`.
    pub linf: [f64; 3],
    /// Relative L2 errors `(rho, phi)`; `None` where the reference field is identically zero.
    pub relerr: [Option<f64>; 2],
}

/// Per-iteration stage losses and periodic evaluations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceHistory {
    pub loss_fp: Vec<f64>,
    pub loss_hjb: Vec<f64>,
    pub loss_policy: Vec<f64>,
    pub evals: Vec<EvalRecord>,
}

impl ConvergenceHistory {
    pub fn len(&self) -> usize {
        self.loss_fp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_fp.is_empty()
    }

    pub fn eval_at(&self, iteration: usize) -> Option<&EvalRecord> {
        self.evals.iter().find(|e| e.iteration == iteration)
    }
}

/// What the networks are compared against during training.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    None,
    /// Closed-form solution of the separable benchmark, on the 100 x 100 evaluation grid.
    Analytic,
    /// A grid solution, compared on its own nodes.
    Grid(&'a Solution),
}

/// Reference values prepared once before training.
enum Prepared<'a> {
    None,
    Analytic { grid: EvalGrid, rho: Vec<f64>, phi: Vec<f64>, q: Vec<f64> },
    Grid(&'a Solution),
}

impl<'a> Prepared<'a> {
    fn new(problem: &MfgProblem, reference: Reference<'a>) -> Result<Self> {
        Ok(match reference {
            Reference::None => Self::None,
            Reference::Grid(sol) => {
                if sol.grid().dim != problem.dim {
                    return Err(MfgError::ShapeMismatch("reference grid dimension differs from the problem".into()));
                }
                Self::Grid(sol)
            }
            Reference::Analytic => {
                let params = AnalyticParams::for_problem(problem)?;
                let grid = EvalGrid::standard(problem);
                let rho = grid.sample(|t, x| analytic_rho(t, x, &params, problem))?;
                let phi = grid.sample(|t, x| analytic_phi(t, x, &params, problem))?;
                let q =
                    grid.nodes().flat_map(|(_, x)| x.iter().map(|v| params.alpha * v).collect::<Vec<_>>()).collect();
                Self::Analytic { grid, rho, phi, q }
            }
        })
    }

    fn evaluate(&self, nets: &DpiNetworks, iteration: usize) -> Result<Option<EvalRecord>> {
        Ok(match self {
            Self::None => None,
            Self::Grid(sol) => {
                let pred = nets.sample_on_grid(sol.grid())?;
                Some(EvalRecord {
                    iteration,
                    linf: linf_distance(&pred, sol)?,
                    relerr: [
                        relative_if_nonzero(pred.rho.values(), sol.rho.values())?,
                        relative_if_nonzero(pred.phi.values(), sol.phi.values())?,
                    ],
                })
            }
            Self::Analytic { grid, rho, phi, q } => {
                let nodes: Vec<(f64, &[f64])> = grid.nodes().collect();
                let vals = crate::par::try_map_indexed(nodes.len(), |k| nets.evaluate(nodes[k].0, nodes[k].1))?;
                let pr: Vec<f64> = vals.iter().map(|v| v.0).collect();
                let pp: Vec<f64> = vals.iter().map(|v| v.1).collect();
                let pq: Vec<f64> = vals.iter().flat_map(|v| v.2.iter().copied()).collect();
                Some(EvalRecord {
                    iteration,
                    linf: [max_abs_diff(&pr, rho)?, max_abs_diff(&pp, phi)?, max_abs_diff(&pq, q)?],
                    relerr: [relative_if_nonzero(&pr, rho)?, relative_if_nonzero(&pp, phi)?],
                })
            }
        })
    }
}

fn relative_if_nonzero(pred: &[f64], reference: &[f64]) -> Result<Option<f64>> {
    if reference.iter().all(|v| *v == 0.0) {
        return Ok(None);
    }
    relative_error(pred, reference, Norm::L2).map(Some)
}

fn stage_error(stage: &'static str, iteration: usize) -> impl Fn(MfgError) -> MfgError {
    move |e| MfgError::Training { stage, iteration, source: Box::new(e) }
}

/// One outer iteration: sample and update the density, value and policy networks
/// in that order. Returns the stage losses measured before the last Adam step
/// of each stage.
pub fn dpi_iteration(
    state: &mut DpiState,
    problem: &MfgProblem,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; 3]> {
    let k = state.iteration;
    let (lr, wd) = (cfg.lr, cfg.weight_decay);

    let interior = sample_interior(cfg.batch, problem, rng);
    let spatial = sample_spatial(cfg.cond_batch, problem, rng);
    let mut l_fp = 0.0;
    for _ in 0..cfg.inner_steps {
        let (l, g) = loss_fp_with_grad(&state.nets, problem, &interior, &spatial).map_err(stage_error("fp", k))?;
        adam_step(state.nets.rho.params_mut(), &g, &mut state.adam_rho, lr, wd)?;
        l_fp = l;
    }

    let interior = sample_interior(cfg.batch, problem, rng);
    let spatial = sample_spatial(cfg.cond_batch, problem, rng);
    let mut l_hjb = 0.0;
    for _ in 0..cfg.inner_steps {
        let (l, g) = loss_hjb_with_grad(&state.nets, problem, &interior, &spatial).map_err(stage_error("hjb", k))?;
        adam_step(state.nets.phi.params_mut(), &g, &mut state.adam_phi, lr, wd)?;
        l_hjb = l;
    }

    let interior = sample_interior(cfg.batch, problem, rng);
    let mut l_pol = 0.0;
    for _ in 0..cfg.inner_steps {
        let (l, g) = loss_policy_with_grad(&state.nets, problem, &interior).map_err(stage_error("policy", k))?;
        adam_step(state.nets.q.params_mut(), &g, &mut state.adam_q, lr, wd)?;
        l_pol = l;
    }

    for (name, net) in [("rho", &state.nets.rho), ("phi", &state.nets.phi), ("q", &state.nets.q)] {
        if let Some(i) = net.params().iter().position(|p| !p.is_finite()) {
            return Err(stage_error("update", k)(MfgError::NonFinite {
                context: format!("{name} parameters"),
                index: i,
            }));
        }
    }
    state.iteration += 1;
    Ok([l_fp, l_hjb, l_pol])
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct DpiRun {
    pub state: DpiState,
    pub history: ConvergenceHistory,
}

/// Trains from a fresh initialization for `cfg.iterations` iterations.
pub fn dpi_train(problem: &MfgProblem, cfg: &TrainConfig, reference: Reference<'_>) -> Result<DpiRun> {
    dpi_train_with(problem, cfg, reference, |_, _| {})
}

/// Like [`dpi_train`], calling `observe(iteration, history)` after every iteration.
pub fn dpi_train_with<F>(
    problem: &MfgProblem,
    cfg: &TrainConfig,
    reference: Reference<'_>,
    mut observe: F,
) -> Result<DpiRun>
where
    F: FnMut(usize, &ConvergenceHistory),
{
    let mut state = DpiState::new(problem, cfg)?;
    let prepared = Prepared::new(problem, reference)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = ConvergenceHistory::default();
    for k in 0..cfg.iterations {
        let [a, b, c] = dpi_iteration(&mut state, problem, cfg, &mut rng)?;
        history.loss_fp.push(a);
        history.loss_hjb.push(b);
        history.loss_policy.push(c);
        let due = cfg.eval_every > 0 && ((k + 1) % cfg.eval_every == 0 || k + 1 == cfg.iterations);
        if due {
            if let Some(rec) = prepared.evaluate(&state.nets, k)? {
                history.evals.push(rec);
            }
        }
        observe(k, &history);
    }
    Ok(DpiRun { state, history })
}
