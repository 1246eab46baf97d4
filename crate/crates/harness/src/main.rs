//! `scuc` command line: evaluate, bound, solve, generate, rank, report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scuc_core::equilibrium::{bound_report, curve_dump};
use scuc_core::{evaluate_json, EvalOptions, Exec, Instance};
use scuc_harness::io::{io_err, scratch_root, to_json, write_atomic, write_json, HarnessError};
use scuc_harness::report::{load_runs, BreakdownReport};
use scuc_harness::tournament::{load_instances, run_tournament, Limits, Manifest, RankingTable, TournamentConfig};
use scuc_harness::{generate_scenario, ScenarioPreset};
use scuc_solver::{solve, SolverConfig, SolverError, StrategyFlags};

#[derive(Parser)]
#[command(name = "scuc", version, about = "AC security-constrained unit commitment toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Score a solution file; prints the score.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = scuc_core::evaluator::DEFAULT_TOL)]
        tol: f64,
        /// Also write the full evaluation as JSON.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Equilibrium bound and gap report as JSON on stdout.
    Bound {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Write per-interval supply and demand curves here.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Run the baseline solver, rewriting `--out` on every improvement.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        strategy: Strategy,
    },
    /// Write a synthetic instance.
    Generate {
        /// For example `14-d1`, `73-d2` or `73-d3-extreme`.
        #[arg(long)]
        preset: ScenarioPreset,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a tournament and write run records and the ranking table.
    Rank {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        solvers: PathBuf,
        #[arg(long)]
        limits: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run one solver process at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Penalty breakdown of tournament run records as CSV and JSON.
    Report {
        #[arg(long)]
        evals: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Strategy {
    #[arg(long)]
    no_batch_rounding: bool,
    #[arg(long)]
    switch_search: bool,
    #[arg(long)]
    no_lodf_screen: bool,
    /// Iteration-capped deterministic mode.
    #[arg(long)]
    polish_iters: Option<usize>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Malformed(String),
}

impl From<scuc_core::model::ModelError> for CliError {
    fn from(e: scuc_core::model::ModelError) -> Self {
        CliError::Harness(e.into())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Solver(SolverError::BudgetTooSmall(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    Ok(std::fs::read(path).map_err(io_err(path))?)
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Evaluate { instance, solution, tol, json_out } => {
            let inst = Instance::load(&instance)?;
            let ev = evaluate_json(&inst, &read(&solution)?, &EvalOptions { tol, ..EvalOptions::default() });
            if let Some(path) = json_out {
                write_json(&path, &ev)?;
            }
            println!("{}", ev.score);
        }
        Cmd::Bound { instance, solution, curves } => {
            let inst = Instance::load(&instance)?;
            let ev = match solution {
                Some(p) => Some(evaluate_json(&inst, &read(&p)?, &EvalOptions::default())),
                None => None,
            };
            if let Some(e) = ev.as_ref().and_then(|e| e.malformed.as_ref()) {
                return Err(CliError::Malformed(format!("solution: {e}")));
            }
            println!("{}", to_json(&bound_report(&inst, ev.as_ref())));
            if let Some(path) = curves {
                #[derive(serde::Serialize)]
                struct Curves {
                    intervals: Vec<scuc_core::equilibrium::CurveDump>,
                }
                write_json(&path, &Curves { intervals: curve_dump(&inst) })?;
            }
        }
        Cmd::Solve { instance, out, budget, seed, strategy } => {
            let inst = Instance::load(&instance)?;
            let cfg = SolverConfig {
                budget_secs: budget,
                seed,
                flags: StrategyFlags {
                    enable_batch_rounding: !strategy.no_batch_rounding,
                    enable_switch_search: strategy.switch_search,
                    enable_lodf_screen: !strategy.no_lodf_screen,
                },
                polish_iters: strategy.polish_iters,
                exec: exec(strategy.sequential),
                out: Some(out),
                ..SolverConfig::default()
            };
            let r = solve(&inst, &cfg)?;
            println!("{}", r.evaluation.score);
        }
        Cmd::Generate { preset, seed, out } => {
            let inst = generate_scenario(preset, seed);
            write_atomic(&out, inst.to_json_string().as_bytes())?;
        }
        Cmd::Rank { instances, solvers, limits, out, seed, sequential } => {
            let entries = load_instances(&instances)?;
            let manifest = Manifest::load(&solvers)?;
            let limits = Limits::load(&limits)?;
            let runs_dir = out.join("runs");
            std::fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
            let cfg = TournamentConfig {
                seed,
                exec: exec(sequential),
                scratch: scratch_root(),
                keep_solutions: Some(out.join("solutions")),
                ..TournamentConfig::default()
            };
            let records = run_tournament(&entries, &manifest.solvers, &limits, &cfg)?;
            for r in &records {
                write_json(&runs_dir.join(format!("{}__{}.json", r.instance, r.solver)), r)?;
            }
            let table = RankingTable::from_runs(&records);
            write_json(&out.join("ranking.json"), &table)?;
            write_atomic(&out.join("ranking.csv"), table.to_csv()?.as_bytes())?;
            print!("{}", table.to_csv()?);
        }
        Cmd::Report { evals, out } => {
            let report = BreakdownReport::from_runs(&load_runs(&evals)?);
            std::fs::create_dir_all(&out).map_err(io_err(&out))?;
            write_json(&out.join("breakdown.json"), &report)?;
            write_atomic(&out.join("breakdown.csv"), report.to_csv()?.as_bytes())?;
        }
    }
    Ok(())
}
