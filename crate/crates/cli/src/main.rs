//! `mfg`: run experiments, list the benchmark problems, plot results.

mod config;
mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfg_core::problem::PRESET_NAMES;
use mfg_core::MfgProblem;

use crate::config::ExperimentConfig;
use crate::plot::{PlotKind, PlotOptions};

#[derive(Parser)]
#[command(name = "mfg", version, about = "Mean field game solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the `seed` key.
        #[arg(long)]
        seed: Option<u64>,
        /// Run on a single thread.
        #[arg(long)]
        deterministic: bool,
    },
    /// List the benchmark problems.
    ListProblems,
    /// Plot a history or solution CSV as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        /// Savitzky-Golay window (odd) applied before drawing.
        #[arg(long)]
        smooth: Option<usize>,
        /// Time of the density slice.
        #[arg(long)]
        time: Option<f64>,
    },
}

/// Thread count from `--deterministic` and `MFG_THREADS`; `None` keeps the default pool.
fn thread_count(deterministic: bool) -> Result<Option<usize>, String> {
    if deterministic {
        return Ok(Some(1));
    }
    match std::env::var("MFG_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("MFG_THREADS must be a positive integer, got `{v}`")),
        },
    }
}

fn list_problems() -> String {
    let mut out = format!("{:<10} {:<6} {}\n", "name", "dims", "hamiltonian");
    for name in PRESET_NAMES {
        let p = MfgProblem::preset(name, 1).expect("every preset exists in dimension 1");
        let dims = if MfgProblem::preset(name, 2).is_ok() { "any" } else { "1" };
        out += &format!("{:<10} {:<6} {}\n", name, dims, p.kind.name());
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListProblems => {
            print!("{}", list_problems());
            ExitCode::SUCCESS
        }
        Command::Plot { input, kind, out, smooth, time } => {
            let result = std::fs::read_to_string(&input)
                .map_err(anyhow::Error::from)
                .and_then(|text| plot::render(&text, kind, &PlotOptions { smooth, time }))
                .and_then(|svg| std::fs::write(&out, svg).map_err(anyhow::Error::from));
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Run { config, out, seed, deterministic } => {
            let threads = match thread_count(deterministic) {
                Ok(t) => t,
                Err(msg) => {
                    eprintln!("configuration error: {msg}");
                    return ExitCode::from(1);
                }
            };
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("global pool is configured once");
            }
            let cfg = match ExperimentConfig::from_file(&config, seed) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e:#}");
                    return ExitCode::from(1);
                }
            };
            let out = out.unwrap_or_else(|| cfg.out.clone());
            match run::run_experiment(&cfg, &out, rayon::current_num_threads(), deterministic) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
