use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfg_core::fd::uniform_grid;
use mfg_core::io::{history_from_csv, solution_from_csv, solution_to_csv};
use mfg_core::MfgProblem;

fn mfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg")).args(args).env_remove("MFG_THREADS").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY_DPI: &str = "problem = lq\nsolver = dpi\niterations = 12\neval_every = 5\nbatch = 8\ncond_batch = 8\n";

#[test]
fn dpi_run_writes_the_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", TINY_DPI);
    let out = dir.path().join("run");
    let res = mfg(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert!(res.status.success(), "{}", stderr(&res));

    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    let rows = history_from_csv(&history).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.loss.iter().all(|l| l.is_some_and(f64::is_finite))));
    let evaluated: Vec<usize> = rows.iter().filter(|r| r.relerr[0].is_some()).map(|r| r.iter).collect();
    assert_eq!(evaluated, vec![4, 9, 11]);

    let solution = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(solution.starts_with("t,x1,rho,phi,q1\n"));
    assert_eq!(solution.lines().count(), 1 + 101 * 100);
    for net in ["rho.net", "phi.net", "q.net"] {
        assert!(out.join(net).exists());
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let config = manifest["config"].as_object().unwrap();
    for key in
        ["problem", "solver", "reference", "seed", "nodes", "steps", "iterations", "lr", "clamp_rho0", "policy_bound"]
    {
        assert!(config.contains_key(key), "manifest lacks {key}");
    }
    assert_eq!(config.len(), 30);
    assert_eq!(manifest["seed"], 3);
    assert_eq!(config["seed"], "3");
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["versions"]["mfg-core"].is_string());
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", TINY_DPI);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--config", &cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let res = mfg(&args);
        assert!(res.status.success(), "{}", stderr(&res));
        fs::read(out.join("history.csv")).unwrap()
    };
    let a = run("a", &["--deterministic"]);
    let b = run("b", &["--deterministic"]);
    let c = run("c", &[]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, run("d", &["--deterministic", "--seed", "1"]));
}

#[test]
fn pi_solution_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "traffic.cfg",
        "problem = traffic\nsolver = pi_fd\nnodes = 30\nsteps = 20\npi_iterations = 4\n",
    );
    let out = dir.path().join("pi");
    let res = mfg(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = fs::read_to_string(out.join("solution.csv")).unwrap();
    let problem = MfgProblem::preset("traffic", 1).unwrap();
    let grid = uniform_grid(&problem, 30, 20).unwrap();
    let sol = solution_from_csv(&text, &grid).unwrap();
    assert_eq!(solution_to_csv(&sol), text);
    // without a reference the history carries the successive changes
    let rows = history_from_csv(&fs::read_to_string(out.join("history.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.loss == [None; 3] && r.linf.iter().all(Option::is_some)));
}

#[test]
fn pi_on_three_dimensions_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "problem = lq\ndim = 3\nsolver = pi_fd\n");
    let res = mfg(&["run", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("dimension"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.cfg", "problem = lq\nsolver = dpi\nspeed = 3\n");
    assert_eq!(mfg(&["run", "--config", &unknown]).status.code(), Some(1));
    assert_eq!(mfg(&["run", "--config", dir.path().join("missing.cfg").to_str().unwrap()]).status.code(), Some(1));

    let good = write_config(dir.path(), "g.cfg", TINY_DPI);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let res = mfg(&["run", "--config", &good, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));

    let res = Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(["run", "--config", &good, "--out", dir.path().join("t").to_str().unwrap()])
        .env("MFG_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn solver_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fp.cfg",
        "problem = example1\nsolver = fixed_point\nnodes = 10\nsteps = 10\nfp_max_iters = 1\n",
    );
    let res = mfg(&["run", "--config", &cfg, "--out", dir.path().join("fp").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
    assert!(stderr(&res).contains("solver failure"));
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", TINY_DPI);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let res = Command::new(env!("CARGO_BIN_EXE_mfg"))
            .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("MFG_THREADS", threads)
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", stderr(&res));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["threads"].as_u64().unwrap().to_string(), threads);
        fs::read(out.join("history.csv")).unwrap()
    };
    assert_eq!(run("one", "1"), run("three", "3"));
}

#[test]
fn list_problems_prints_the_catalog() {
    let res = mfg(&["list-problems"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let names: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["lq", "example1", "example2", "traffic"]);
}

#[test]
fn plots_from_run_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lq.cfg", TINY_DPI);
    let out = dir.path().join("run");
    assert!(mfg(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let history = out.join("history.csv");
    let plot = |kind: &str, input: &Path, svg: &str, extra: &[&str]| {
        let target = dir.path().join(svg);
        let mut args =
            vec!["plot", "--input", input.to_str().unwrap(), "--kind", kind, "--out", target.to_str().unwrap()];
        args.extend_from_slice(extra);
        let res = mfg(&args);
        (res, target)
    };
    let (res, svg) = plot("loss", &history, "loss.svg", &[]);
    assert!(res.status.success(), "{}", stderr(&res));
    let loss = fs::read_to_string(&svg).unwrap();
    assert_eq!(loss.matches("<polyline").count(), 3);
    let (_, again) = plot("loss", &history, "loss2.svg", &[]);
    assert_eq!(fs::read_to_string(again).unwrap(), loss);
    let (_, smooth) = plot("loss", &history, "loss3.svg", &["--smooth", "5"]);
    assert_ne!(fs::read_to_string(smooth).unwrap(), loss);

    let (res, _) = plot("linf", &history, "linf.svg", &[]);
    assert!(res.status.success(), "{}", stderr(&res));
    let (res, svg) = plot("slice", &out.join("solution.csv"), "slice.svg", &["--time", "0.5"]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(fs::read_to_string(svg).unwrap().contains("rho(t = 0.5000)"));

    let (res, _) = plot("slice", &history, "bad.svg", &[]);
    assert_eq!(res.status.code(), Some(1));
}
