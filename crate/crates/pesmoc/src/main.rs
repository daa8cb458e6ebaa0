//! Command-line interface: generate problems, run single campaigns, run
//! benchmark suites, rescore traces, and dump 2-D acquisition surfaces.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use pesmoc::acquisition::{acquisition_surface, build_acquisition_context};
use pesmoc::driver::{
    load_trace, metrics_csv, run, run_benchmark, save_trace, score_trace, write_report,
    BenchmarkConfig, RunConfig, Scenario, Strategy,
};
use pesmoc::error::{Error, Result};
use pesmoc::problem::{
    default_synthetic_hp, load_problem, make_toy_problem, sample_synthetic_problem, save_problem,
    BoxDomain, Dataset, Observation,
};
use pesmoc::Real;

/// Inclusive-start half-open seed range: `7` is the single seed 7, `0..5`
/// is seeds 0,1,2,3,4.
#[derive(Debug, Clone)]
struct SeedRange(Vec<u64>);

impl std::str::FromStr for SeedRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |part: &str| -> Result<u64> {
            part.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid seed '{part}' in '{s}'")))
        };
        if let Some((a, b)) = s.split_once("..") {
            let (start, end) = (parse(a)?, parse(b)?);
            if end <= start {
                return Err(Error::Config(format!("empty seed range '{s}'")));
            }
            Ok(SeedRange((start..end).collect()))
        } else {
            Ok(SeedRange(vec![parse(s)?]))
        }
    }
}

#[derive(Parser)]
#[command(name = "pesmoc", version, about = "Constrained multi-objective Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic benchmark problem and write it as JSON.
    Generate {
        /// Input dimension.
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// Objective count.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Constraint count.
        #[arg(long, default_value_t = 2)]
        c: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature count of the sampled functions' expansions.
        #[arg(long, default_value_t = 500)]
        features: usize,
        /// Write the fixed 2-D analytic demo problem instead of sampling.
        #[arg(long, conflicts_with_all = ["d", "k", "c", "features", "seed"])]
        toy: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one optimization campaign and write its trace.
    Run {
        #[arg(long)]
        problem: PathBuf,
        /// pesmoc or random.
        #[arg(long)]
        strategy: Strategy,
        /// Total evaluations, initial design included.
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 3)]
        n_initial: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the problem's observation noise (sd).
        #[arg(long)]
        noise: Option<Real>,
        #[arg(long, default_value_t = 10)]
        hyper_samples: usize,
        #[arg(long, default_value_t = 10)]
        pareto_samples: usize,
        #[arg(long, default_value_t = 1000)]
        pool_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark suite comparing both strategies on sampled problems.
    Bench {
        #[arg(long, default_value_t = 10)]
        problems: usize,
        /// noiseless or noisy (sd 0.1).
        #[arg(long, default_value = "noiseless")]
        scenario: Scenario,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 3)]
        n_initial: usize,
        /// Run seeds: `S` or half-open `S..E`.
        #[arg(long, default_value = "0..1")]
        seeds: SeedRange,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        c: usize,
        /// Base seed of the problem-generation stream.
        #[arg(long, default_value_t = 1000)]
        problem_seed: u64,
        #[arg(long, default_value_t = 500)]
        features: usize,
        #[arg(long, default_value_t = 10)]
        hyper_samples: usize,
        #[arg(long, default_value_t = 10)]
        pareto_samples: usize,
        #[arg(long, default_value_t = 1000)]
        pool_size: usize,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rescore a trace against its problem's ground truth and write the
    /// metric series as CSV.
    Score {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the acquisition surface at one iteration of a 2-D trace as CSV.
    AcqSurface {
        #[arg(long)]
        trace: PathBuf,
        /// Iteration (observation count) whose models to rebuild.
        #[arg(long)]
        iter: usize,
        /// Grid points per axis.
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate { d, k, c, seed, features, toy, out } => {
            let problem = if toy {
                make_toy_problem::<Real>()
            } else {
                let hp = default_synthetic_hp(&BoxDomain::<Real>::unit(d));
                sample_synthetic_problem(d, k, c, &hp, features, seed)?
            };
            save_problem(&problem, &out)?;
            println!("wrote {} ({})", out.display(), problem.name);
            Ok(())
        }
        Command::Run {
            problem,
            strategy,
            budget,
            n_initial,
            seed,
            noise,
            hyper_samples,
            pareto_samples,
            pool_size,
            out,
        } => {
            let problem = load_problem::<Real>(&problem)?;
            let config = RunConfig {
                strategy,
                budget,
                n_initial,
                seed,
                noise_override: noise,
                n_hyper_samples: hyper_samples,
                n_pareto_samples: pareto_samples,
                pool_size,
            };
            let trace = run(&config, &problem)?;
            save_trace(&trace, &out)?;
            let last = trace.metrics.last().expect("run always scores");
            println!(
                "wrote {} ({} on {}, {} evaluations, final log gap {})",
                out.display(),
                strategy,
                trace.problem.name,
                trace.records.len(),
                last.log_gap
            );
            Ok(())
        }
        Command::Bench {
            problems,
            scenario,
            budget,
            n_initial,
            seeds,
            d,
            k,
            c,
            problem_seed,
            features,
            hyper_samples,
            pareto_samples,
            pool_size,
            out,
        } => {
            let cfg = BenchmarkConfig {
                n_problems: problems,
                d,
                k,
                c,
                budget,
                n_initial,
                scenario,
                seeds: seeds.0,
                problem_seed,
                n_problem_features: features,
                n_hyper_samples: hyper_samples,
                n_pareto_samples: pareto_samples,
                pool_size,
            };
            let report = run_benchmark::<Real>(&cfg)?;
            write_report(&report, &out)?;
            println!(
                "wrote {} (pesmoc wins {}/{} problems, {} failed runs)",
                out.display(),
                report.pesmoc_wins,
                report.outcomes.len(),
                report.failures.len()
            );
            Ok(())
        }
        Command::Score { trace, problem, out } => {
            let trace = load_trace::<Real>(&trace)?;
            let problem = load_problem::<Real>(&problem)?;
            // The trace's embedded problem may carry a scenario noise
            // override; everything else must match the problem file.
            let mut embedded = trace.problem.clone();
            let mut given = problem;
            embedded.noise_sd = 0.0;
            given.noise_sd = 0.0;
            if serde_json::to_string(&embedded)? != serde_json::to_string(&given)? {
                return Err(Error::ProblemMismatch(format!(
                    "trace was produced on '{}', not '{}'",
                    trace.problem.name, given.name
                )));
            }
            let metrics = score_trace(&trace)?;
            std::fs::write(&out, metrics_csv(&metrics))?;
            println!("wrote {} ({} iterations)", out.display(), metrics.len());
            Ok(())
        }
        Command::AcqSurface { trace, iter, resolution, out } => {
            let trace = load_trace::<Real>(&trace)?;
            if iter < trace.config.n_initial || iter > trace.records.len() {
                return Err(Error::Config(format!(
                    "iteration {} outside this trace's scored range {}..={}",
                    iter,
                    trace.config.n_initial,
                    trace.records.len()
                )));
            }
            let mut data = Dataset::new();
            for r in &trace.records[..iter] {
                data.push(Observation { x: r.x.clone(), y: r.y.clone() })?;
            }
            let ctx = build_acquisition_context(
                &trace.problem.domain,
                trace.problem.n_objectives,
                trace.problem.n_constraints,
                &data,
                &trace.config.acquisition_params(),
                trace.config.seed,
                iter as u64,
            )?;
            std::fs::write(&out, acquisition_surface(&ctx, resolution)?)?;
            println!("wrote {} ({}x{} grid)", out.display(), resolution, resolution);
            Ok(())
        }
    }
}
