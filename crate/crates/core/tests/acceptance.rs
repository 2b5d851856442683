//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line to
//! the real stderr (bypassing the harness capture) before asserting.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mfg_core::dpi::{dpi_train, ConvergenceHistory, Reference, TrainConfig};
use mfg_core::fd::{
    discrete_laplacian, eo_divergence, fp_step_implicit, interpolate, run_fixed_point, run_policy_iteration,
    solution_distance, uniform_grid, FdConfig, Stencil,
};
use mfg_core::io::{dpi_history_rows, history_to_csv, pi_history_rows};
use mfg_core::metrics::{analytic_relative_errors, savgol};
use mfg_core::nn::{Activation, Jet2, Network, NetworkSpec, OutputTransform, SamplePoint};
use mfg_core::problem::{
    analytic_phi_derivatives, analytic_rho_derivatives, standard_gaussian_derivatives, AnalyticParams, HamiltonianKind,
};
use mfg_core::{Boundary, GridField, MfgProblem, Solution, SpaceTimeGrid};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {criterion}: {verdict} {detail}");
}

fn check(criterion: u32, pass: bool, detail: String) {
    report(criterion, pass, &detail);
    assert!(pass, "criterion {criterion}: {detail}");
}

fn within(elapsed: Duration, budget_secs: f64) -> bool {
    elapsed.as_secs_f64() <= budget_secs
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_point(rng: &mut ChaCha8Rng, p: &MfgProblem) -> (f64, Vec<f64>) {
    let t = rng.gen_range(0.0..p.horizon);
    let x = (0..p.dim).map(|_| rng.gen_range(p.lo..p.hi)).collect();
    (t, x)
}

/// HJB and FP residuals of the closed form at one point, from its exact
/// derivatives and the Hamiltonian written out by hand.
fn lq_residuals(p: &MfgProblem, params: &AnalyticParams, t: f64, x: &[f64], printed_rho: bool) -> (f64, f64) {
    let phi = analytic_phi_derivatives(t, x, params, p).unwrap();
    let rho =
        if printed_rho { standard_gaussian_derivatives(x) } else { analytic_rho_derivatives(t, x, params, p).unwrap() };
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let p2: f64 = phi.grad.iter().map(|v| v * v).sum();
    let h = p2 / 2.0 - p.beta * x2 / 2.0 - p.gamma * rho.value.ln();
    let hjb = -phi.dt - p.nu * phi.lap + h;
    // div(rho grad phi) with grad phi = alpha x
    let div = rho.grad.iter().zip(&phi.grad).map(|(a, b)| a * b).sum::<f64>() + rho.value * phi.lap;
    let fp = rho.dt - p.nu * rho.lap - div;
    (hjb, fp)
}

#[test]
fn criterion_01_closed_form_residuals() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut printed_fp_gamma = 0.0f64;
    let mut printed_worst_gamma0 = 0.0f64;
    for gamma in [0.0, 0.1] {
        for dim in [1, 2] {
            let p = MfgProblem::preset("lq", dim).unwrap().with_gamma(gamma);
            let params = AnalyticParams::for_problem(&p).unwrap();
            for _ in 0..1000 {
                let (t, x) = random_point(&mut rng, &p);
                let (hjb, fp) = lq_residuals(&p, &params, t, &x, false);
                worst = worst.max(hjb.abs()).max(fp.abs());
                let (ph, pf) = lq_residuals(&p, &params, t, &x, true);
                if gamma == 0.0 {
                    printed_worst_gamma0 = printed_worst_gamma0.max(ph.abs()).max(pf.abs());
                } else {
                    printed_fp_gamma = printed_fp_gamma.max(pf.abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && printed_worst_gamma0 <= 1e-10 && within(elapsed, 1.0);
    check(
        1,
        pass,
        format!(
            "max residual {worst:.2e}; printed N(0, 1) density: max residual {printed_worst_gamma0:.2e} at gamma = 0, \
             FP residual {printed_fp_gamma:.2e} at gamma = 0.1 (not a solution there); {:.3} s",
            elapsed.as_secs_f64()
        ),
    );
}

/// `sup_p p.q - H(p)` by repeated grid refinement around the best node. The
/// search box grows while the best node sits on its edge.
fn brute_force_sup(p: &MfgProblem, x: &[f64], rho: f64, q: &[f64]) -> f64 {
    let d = q.len();
    let objective =
        |pp: &[f64]| -> f64 { pp.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() - p.hamiltonian(x, rho, pp).unwrap() };
    let search = |centre: &[f64], half: f64, n: usize| -> (Vec<f64>, f64, bool) {
        let mut best = (centre.to_vec(), f64::NEG_INFINITY, false);
        let mut idx = vec![0usize; d];
        let mut pt = vec![0.0; d];
        loop {
            for k in 0..d {
                pt[k] = centre[k] - half + 2.0 * half * idx[k] as f64 / (n - 1) as f64;
            }
            let v = objective(&pt);
            if v > best.1 {
                best = (pt.clone(), v, idx.iter().any(|&i| i == 0 || i == n - 1));
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                return best;
            }
        }
    };
    let mut half = 10.0;
    let mut centre = vec![0.0; d];
    let (mut best, mut value, mut on_edge) = search(&centre, half, 41);
    while on_edge {
        half *= 2.0;
        (best, value, on_edge) = search(&centre, half, 41);
    }
    let mut step = 2.0 * half / 40.0;
    for _ in 0..10 {
        centre = best.clone();
        half = 2.0 * step;
        let (b, v, _) = search(&centre, half, 21);
        if v > value {
            best = b;
            value = v;
        }
        step = 2.0 * half / 20.0;
    }
    value
}

#[test]
fn criterion_02_legendre_duality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cases = [("lq", 2, 0.1), ("example1", 2, 0.0), ("example2", 2, 0.0), ("traffic", 1, 0.0)];
    let mut worst_sup = 0.0f64;
    let mut worst_dual = 0.0f64;
    let mut kinds = Vec::new();
    for (name, dim, gamma) in cases {
        let p = MfgProblem::preset(name, dim).unwrap().with_gamma(gamma);
        kinds.push(p.kind);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(p.lo..p.hi)).collect();
            let rho = rng.gen_range(0.1..2.0);
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let brute = brute_force_sup(&p, &x, rho, &q);
            let closed = p.lagrangian(&x, rho, &q).unwrap();
            worst_sup = worst_sup.max((brute - closed).abs());

            let pp: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let qs = p.optimal_policy(&x, rho, &pp).unwrap();
            let pq: f64 = pp.iter().zip(&qs).map(|(a, b)| a * b).sum();
            let gap = p.lagrangian(&x, rho, &qs).unwrap() + p.hamiltonian(&x, rho, &pp).unwrap() - pq;
            worst_dual = worst_dual.max(gap.abs() / pq.abs().max(1.0));
        }
    }
    assert_eq!(
        kinds,
        [
            HamiltonianKind::SeparableLq,
            HamiltonianKind::Congestion1,
            HamiltonianKind::Congestion2,
            HamiltonianKind::TrafficFlow
        ]
    );
    let elapsed = start.elapsed();
    let pass = worst_sup <= 1e-6 && worst_dual <= 1e-10 && within(elapsed, 10.0);
    check(
        2,
        pass,
        format!(
            "max |sup - L| {worst_sup:.2e}, max duality gap {worst_dual:.2e} over 4 Hamiltonians; {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Fourth-order central difference of `f` at 0 (first derivative).
fn d1(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let c = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

/// Fourth-order central difference of `f` at 0 (second derivative).
fn d2(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let f0 = f(0.0);
    let c = |h: f64| (f(h) - 2.0 * f0 + f(-h)) / (h * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

/// A smooth scalar function of the jet, and its adjoint.
fn jet_loss(j: &Jet2) -> (f64, Jet2) {
    let mut adj = Jet2::zeros(j.value.len(), j.dim());
    let mut l = 0.0;
    for o in 0..j.value.len() {
        l += j.value[o] * j.value[o] / 2.0 + 0.3 * j.dt[o] * j.value[o] + 0.2 * j.lap_x[o];
        adj.value[o] = j.value[o] + 0.3 * j.dt[o];
        adj.dt[o] = 0.3 * j.value[o];
        adj.lap_x[o] = 0.2;
    }
    for (k, g) in j.grad_x.iter().enumerate() {
        l += 0.1 * g * g;
        adj.grad_x[k] = 0.2 * g;
    }
    (l, adj)
}

#[test]
fn criterion_03_network_derivatives() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_jet = 0.0f64;
    let mut worst_param = 0.0f64;
    for case in 0..100 {
        let act = Activation::ALL[case % 4];
        let depth = 1 + case % 3;
        let dim = rng.gen_range(1..=3);
        let outputs = if rng.gen_bool(0.5) { 1 } else { dim };
        let width = rng.gen_range(3..=8);
        let widths = (0..depth).map(|l| if l > 0 && rng.gen_bool(0.3) { width + 1 } else { width }).collect();
        let transform = if rng.gen_bool(0.5) { OutputTransform::Identity } else { OutputTransform::Softplus };
        let skip = [0.0, 0.5, rng.gen_range(0.0..1.0)][case % 3];
        let spec = NetworkSpec::new(dim, outputs, widths, act).with_skip(skip).with_output(transform);
        let net = Network::new(spec, rng.gen()).unwrap();

        let t: f64 = rng.gen_range(0.0..1.0);
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let jet = net.jet(t, &x).unwrap();
        for o in 0..outputs {
            let at = |tt: f64, xx: &[f64]| net.forward(tt, xx).unwrap()[o];
            let fd_dt = d1(|s| at(t + s, &x), 1e-3);
            worst_jet = worst_jet.max(rel(fd_dt, jet.dt[o]));
            let mut lap = 0.0;
            for k in 0..dim {
                let shifted = |s: f64| {
                    let mut y = x.clone();
                    y[k] += s;
                    at(t, &y)
                };
                worst_jet = worst_jet.max(rel(d1(shifted, 1e-3), jet.grad(o)[k]));
                lap += d2(shifted, 1e-2);
            }
            worst_jet = worst_jet.max(rel(lap, jet.lap_x[o]));
        }

        let points: Vec<SamplePoint> = (0..3)
            .map(|_| SamplePoint::new(rng.gen_range(0.0..1.0), (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()))
            .collect();
        let total = |n: &Network| -> f64 { points.iter().map(|pt| jet_loss(&n.jet(pt.t, &pt.x).unwrap()).0).sum() };
        let (loss, grad) = net.loss_and_param_grad(&points, true, |_, j| Ok(jet_loss(j))).unwrap();
        assert!((loss - total(&net)).abs() <= 1e-12 * loss.abs().max(1.0));
        for i in 0..net.num_params() {
            let base = net.params()[i];
            let fd = d1(
                |s| {
                    let mut shifted = net.clone();
                    shifted.params_mut()[i] = base + s;
                    total(&shifted)
                },
                1e-3,
            );
            worst_param = worst_param.max(rel(fd, grad[i]));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_jet <= 1e-5 && worst_param <= 1e-4 && within(elapsed, 30.0);
    check(
        3,
        pass,
        format!(
            "100 networks: max relative jet error {worst_jet:.2e}, max relative parameter gradient error {worst_param:.2e}; {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

fn periodic_grid(dim: usize, nodes: usize, steps: usize) -> SpaceTimeGrid {
    SpaceTimeGrid::new(dim, 0.0, 1.0, 1.0, nodes, steps, Boundary::Periodic).unwrap()
}

fn eo_error(nodes: usize) -> f64 {
    use std::f64::consts::PI;
    let g = periodic_grid(1, nodes, 1);
    let xs: Vec<f64> = (0..nodes).map(|i| g.coord(i)).collect();
    let rho: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * (2.0 * PI * x).sin()).collect();
    let q: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).cos()).collect();
    let div = eo_divergence(&rho, &q, &g).unwrap();
    xs.iter()
        .zip(&div)
        .map(|(x, v)| {
            let s = 2.0 * PI * x;
            let exact = PI * s.cos() * s.cos() - 2.0 * PI * (1.0 + 0.5 * s.sin()) * s.sin();
            (v - exact).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_04_finite_difference_operators() {
    let start = Instant::now();
    let mut runner = TestRunner::new(PropConfig { cases: 64, ..PropConfig::default() });

    let mass = (1usize..=2, 4usize..=14, any::<u64>()).prop_map(|(dim, nodes, seed)| (dim, nodes, seed));
    let mass_result = runner.run(&mass, |(dim, nodes, seed)| {
        let g = periodic_grid(dim, nodes, 10);
        let st = Stencil::new(&g).unwrap();
        let n = g.space_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let q: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let next = fp_step_implicit(&st, &rho, &q, 0.3, &FdConfig::default()).unwrap();
        let cell = g.h.powi(dim as i32);
        let before: f64 = rho.iter().sum::<f64>() * cell;
        let after: f64 = next.iter().sum::<f64>() * cell;
        prop_assert!((before - after).abs() <= 1e-10, "mass {before} -> {after}");
        Ok(())
    });

    let adjoint = (1usize..=2, 3usize..=24, any::<u64>());
    let adjoint_result = runner.run(&adjoint, |(dim, nodes, seed)| {
        let g = periodic_grid(dim, nodes, 1);
        let n = g.space_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = discrete_laplacian(&u, &g).unwrap();
        let lv = discrete_laplacian(&v, &g).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let norm = |a: &[f64]| dot(a, a).sqrt();
        let scale = norm(&lu) * norm(&v) + norm(&u) * norm(&lv);
        prop_assert!((dot(&lu, &v) - dot(&u, &lv)).abs() <= 1e-12 * scale);
        Ok(())
    });

    // mass of every time slice along a full policy iteration run
    let p = MfgProblem::preset("example1", 2).unwrap();
    let grid = uniform_grid(&p, 16, 12).unwrap();
    let cfg = FdConfig { iterations: 3, ..FdConfig::default() };
    let (sol, _) = run_policy_iteration(&p, &grid, &cfg, &GridField::zeros(grid, 2), None).unwrap();
    let m0: f64 = sol.rho.slice(0).iter().sum();
    let run_drift = (0..grid.time_len())
        .map(|n| (sol.rho.slice(n).iter().sum::<f64>() - m0).abs() * grid.h * grid.h)
        .fold(0.0, f64::max);

    let sizes = [100usize, 200, 400];
    let errs: Vec<f64> = sizes.iter().map(|&n| eo_error(n)).collect();
    let lx: Vec<f64> = sizes.iter().map(|&n| (1.0 / n as f64).ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let order = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();

    let elapsed = start.elapsed();
    let pass =
        mass_result.is_ok() && adjoint_result.is_ok() && run_drift <= 1e-10 && order >= 0.9 && within(elapsed, 30.0);
    check(
        4,
        pass,
        format!(
            "mass per step {}, Laplacian symmetry {}, run mass drift {run_drift:.2e}, EO order {order:.3} \
             (errors {:.2e} {:.2e} {:.2e}); {:.2} s",
            if mass_result.is_ok() { "ok" } else { "violated" },
            if adjoint_result.is_ok() { "ok" } else { "violated" },
            errs[0],
            errs[1],
            errs[2],
            elapsed.as_secs_f64()
        ),
    );
}

struct TrafficPi {
    history_csv: String,
    first_small: Option<usize>,
    distance: [f64; 3],
    seconds: f64,
}

fn traffic_pi() -> TrafficPi {
    let start = Instant::now();
    let p = MfgProblem::preset("traffic", 1).unwrap();
    let grid = uniform_grid(&p, 200, 200).unwrap();
    let cfg = FdConfig { iterations: 50, ..FdConfig::default() };
    let (sol, hist) = run_policy_iteration(&p, &grid, &cfg, &GridField::zeros(grid, 1), None).unwrap();
    let first_small = (0..hist.len()).find(|&k| hist.max_change(k) < 1e-4);
    let reference = run_fixed_point(&p, &grid, &FdConfig::default()).unwrap();
    let distance = solution_distance(&sol, &reference.solution).unwrap();
    TrafficPi {
        history_csv: history_to_csv(&pi_history_rows(&hist)),
        first_small,
        distance,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn traffic_pi_run() -> &'static TrafficPi {
    static RUN: OnceLock<TrafficPi> = OnceLock::new();
    RUN.get_or_init(traffic_pi)
}

#[test]
fn criterion_05_traffic_policy_iteration() {
    let r = traffic_pi_run();
    let converged = r.first_small.is_some_and(|k| k < 49);
    let pass = converged && r.distance.iter().all(|d| *d <= 5e-3) && r.seconds <= 300.0;
    check(
        5,
        pass,
        format!(
            "changes below 1e-4 at iteration {:?}; sup distance to fixed point rho {:.2e} phi {:.2e} q {:.2e}; {:.1} s",
            r.first_small, r.distance[0], r.distance[1], r.distance[2], r.seconds
        ),
    );
}

struct DpiOutcome {
    history: ConvergenceHistory,
    history_csv: String,
    seconds: f64,
}

fn train(problem: &MfgProblem, iterations: usize, reference: Reference<'_>) -> DpiOutcome {
    let start = Instant::now();
    let mut cfg = TrainConfig::for_problem(problem);
    cfg.iterations = iterations;
    let run = dpi_train(problem, &cfg, reference).unwrap();
    DpiOutcome {
        history_csv: history_to_csv(&dpi_history_rows(&run.history)),
        history: run.history,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn lq_problem(gamma: f64) -> MfgProblem {
    MfgProblem::preset("lq", 1).unwrap().with_gamma(gamma).with_analytic_rho0(true)
}

fn lq_dpi(gamma: f64) -> DpiOutcome {
    train(&lq_problem(gamma), 20_000, Reference::Analytic)
}

fn lq_dpi_run(gamma: f64) -> &'static DpiOutcome {
    static PLAIN: OnceLock<DpiOutcome> = OnceLock::new();
    static CONGESTED: OnceLock<DpiOutcome> = OnceLock::new();
    if gamma == 0.0 {
        PLAIN.get_or_init(|| lq_dpi(0.0))
    } else {
        CONGESTED.get_or_init(|| lq_dpi(gamma))
    }
}

/// Mean loss over iterations 90..=110 against the mean over the last 100.
fn loss_drops(h: &ConvergenceHistory) -> [f64; 3] {
    let n = h.len();
    [&h.loss_fp, &h.loss_hjb, &h.loss_policy].map(|l| mean(&l[90..=110]) / mean(&l[n - 100..]))
}

fn check_lq(criterion: u32, gamma: f64) {
    let r = lq_dpi_run(gamma);
    let last = r.history.evals.last().expect("evaluations were recorded");
    let [err_rho, err_phi] = last.relerr.map(|e| e.expect("analytic fields are nonzero"));
    let drops = loss_drops(&r.history);
    let pass = err_rho <= 5e-2 && err_phi <= 5e-2 && drops.iter().all(|d| *d >= 10.0) && r.seconds <= 1800.0;
    check(
        criterion,
        pass,
        format!(
            "gamma = {gamma}: relative L2 error rho {err_rho:.3e} phi {err_phi:.3e} at iteration {}; \
             loss drops fp {:.1}x hjb {:.1}x policy {:.1}x; {:.0} s",
            last.iteration, drops[0], drops[1], drops[2], r.seconds
        ),
    );
}

#[test]
fn criterion_06_dpi_separable_without_congestion() {
    check_lq(6, 0.0);
}

#[test]
fn criterion_07_dpi_separable_with_congestion() {
    check_lq(7, 0.1);
}

fn example1_reference() -> &'static Solution {
    static REF: OnceLock<Solution> = OnceLock::new();
    REF.get_or_init(|| {
        let p = MfgProblem::preset("example1", 2).unwrap();
        let grid = uniform_grid(&p, 50, 50).unwrap();
        run_fixed_point(&p, &grid, &FdConfig::default()).unwrap().solution
    })
}

fn example1_dpi() -> DpiOutcome {
    let start = Instant::now();
    let reference = example1_reference();
    let mut out = train(&MfgProblem::preset("example1", 2).unwrap(), 20_000, Reference::Grid(reference));
    out.seconds = start.elapsed().as_secs_f64();
    out
}

fn example1_dpi_run() -> &'static DpiOutcome {
    static RUN: OnceLock<DpiOutcome> = OnceLock::new();
    RUN.get_or_init(example1_dpi)
}

#[test]
fn criterion_08_dpi_congestion_against_fixed_point() {
    let r = example1_dpi_run();
    let evals = &r.history.evals;
    let n = evals.len();
    let mut finals = [0.0; 3];
    let mut increases = [0usize; 3];
    for k in 0..3 {
        let series: Vec<f64> = evals.iter().map(|e| e.linf[k]).collect();
        finals[k] = series[n - 1];
        let smooth = savgol(&series, 11, 3).unwrap();
        increases[k] = smooth[n - n / 4..].windows(2).filter(|w| w[1] > w[0]).count();
    }
    let pass = finals.iter().all(|v| *v < 0.1) && increases == [0; 3] && r.seconds <= 3600.0;
    check(
        8,
        pass,
        format!(
            "final sup distance rho {:.3e} phi {:.3e} q {:.3e}; increases of the smoothed tail {increases:?} \
             over {} evaluations; {:.0} s",
            finals[0],
            finals[1],
            finals[2],
            n / 4,
            r.seconds
        ),
    );
}

#[test]
fn criterion_09_high_dimensional_smoke() {
    let p = MfgProblem::preset("lq", 10).unwrap();
    let r = train(&p, 2000, Reference::None);
    let h = &r.history;
    let finite = [&h.loss_fp, &h.loss_hjb, &h.loss_policy].iter().all(|l| l.iter().all(|v| v.is_finite()));
    let drops = [&h.loss_fp, &h.loss_hjb, &h.loss_policy].map(|l| mean(&l[..100]) / mean(&l[l.len() - 100..]));
    let pass = finite && drops.iter().all(|d| *d >= 3.0);
    check(
        9,
        pass,
        format!(
            "d = 10, 2000 iterations: finite {finite}; loss drops fp {:.1}x hjb {:.1}x policy {:.1}x; {:.0} s",
            drops[0], drops[1], drops[2], r.seconds
        ),
    );
}

#[test]
fn criterion_10_grid_solver_on_unbounded_domain() {
    let p = MfgProblem::preset("lq", 1).unwrap().with_boundary(Boundary::Periodic);
    let grid = uniform_grid(&p, 100, 100).unwrap();
    let (sol, _) = run_policy_iteration(&p, &grid, &FdConfig::default(), &GridField::zeros(grid, 1), None).unwrap();
    let pi = analytic_relative_errors(&p, |t, x| Ok((interpolate(&sol.rho, 0, t, x), interpolate(&sol.phi, 0, t, x))))
        .unwrap();
    let dpi = lq_dpi_run(0.0).history.evals.last().unwrap().relerr[0].unwrap();
    check(
        10,
        pi.rel_err_rho > dpi,
        format!("relative L2 density error: periodic policy iteration {:.3e}, DPI {dpi:.3e}", pi.rel_err_rho),
    );
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

#[test]
fn criterion_11_reruns_are_byte_identical() {
    let mut same = Vec::new();
    same.push(("traffic PI", single_thread(traffic_pi).history_csv == traffic_pi_run().history_csv));
    for (name, gamma) in [("LQ gamma 0", 0.0), ("LQ gamma 0.1", 0.1)] {
        same.push((name, single_thread(|| lq_dpi(gamma)).history_csv == lq_dpi_run(gamma).history_csv));
    }
    same.push(("example1 DPI", single_thread(example1_dpi).history_csv == example1_dpi_run().history_csv));
    let pass = same.iter().all(|(_, s)| *s);
    let detail: Vec<String> =
        same.iter().map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "differs" })).collect();
    check(11, pass, format!("single-thread reruns: {}", detail.join(", ")));
}
