//! Optimization-campaign driver: runs complete campaigns (initial design,
//! per-iteration model refit, point selection, recommendation, scoring) for
//! both the entropy-based strategy and a uniform-random baseline, persists
//! traces, and aggregates benchmark suites comparing the two.
//!
//! Everything a campaign does is derived deterministically from its seed via
//! tagged streams, so a rerun with the same configuration reproduces the
//! trace byte for byte.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::acquisition::{
    build_acquisition_context, maximize_acquisition, sample_hyper_gps, AcquisitionParams,
    AcquisitionValue,
};
use crate::ep::EpOptions;
use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::pareto::{hypervolume, log_relative_hv_gap, pareto_front, DEFAULT_GAP_FLOOR};
use crate::problem::{
    compute_ground_truth, default_synthetic_hp, default_truth_grid_size, sample_synthetic_problem,
    BlackBoxProblem, BoxDomain, Dataset, GroundTruth, Observation,
};
use crate::qmc;
use crate::rng::{
    derive_rng, TAG_INITIAL_DESIGN, TAG_NOISE, TAG_PROBLEM, TAG_RANDOM_SEARCH, TAG_SUBSAMPLE,
};
use crate::scalar::{SampleScalar, Scalar};

/// Trace file schema; bump on breaking format changes.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Point-selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Entropy-reduction acquisition over sampled Pareto sets.
    Pesmoc,
    /// Uniform-random baseline.
    Random,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Pesmoc => "pesmoc",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pesmoc" => Ok(Strategy::Pesmoc),
            "random" => Ok(Strategy::Random),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected pesmoc or random)"
            ))),
        }
    }
}

/// Observation-noise scenario for benchmark suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Noiseless,
    /// Every observation contaminated with sd-0.1 Gaussian noise.
    Noisy,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Noiseless => "noiseless",
            Scenario::Noisy => "noisy",
        }
    }

    pub fn noise_sd<S: Scalar>(self) -> S {
        match self {
            Scenario::Noiseless => S::zero(),
            Scenario::Noisy => S::c(0.1),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noiseless" => Ok(Scenario::Noiseless),
            "noisy" => Ok(Scenario::Noisy),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected noiseless or noisy)"
            ))),
        }
    }
}

/// One campaign's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct RunConfig<S> {
    pub strategy: Strategy,
    /// Total evaluation count, initial design included.
    pub budget: usize,
    /// Leading quasi-random evaluations, identical across strategies.
    pub n_initial: usize,
    pub seed: u64,
    /// Replaces the problem's observation noise when set (scenario control);
    /// the trace's embedded problem records the effective value.
    pub noise_override: Option<S>,
    pub n_hyper_samples: usize,
    pub n_pareto_samples: usize,
    pub pool_size: usize,
}

impl<S: Scalar> RunConfig<S> {
    pub fn new(strategy: Strategy, budget: usize, seed: u64) -> Self {
        RunConfig {
            strategy,
            budget,
            n_initial: 3,
            seed,
            noise_override: None,
            n_hyper_samples: 10,
            n_pareto_samples: 10,
            pool_size: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 1 || self.budget < self.n_initial {
            return Err(Error::Config(format!(
                "need budget >= n_initial >= 1, got budget {} and n_initial {}",
                self.budget, self.n_initial
            )));
        }
        self.acquisition_params().validate()
    }

    /// Acquisition sizes for this campaign; EP diagnostics follow the
    /// environment (`PESMOC_DEBUG_EP=1`).
    pub fn acquisition_params(&self) -> AcquisitionParams {
        AcquisitionParams {
            n_hyper_samples: self.n_hyper_samples,
            n_pareto_samples: self.n_pareto_samples,
            pool_size: self.pool_size,
            ep: EpOptions::from_env(),
            ..AcquisitionParams::default()
        }
    }
}

/// One evaluated point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct EvalRecord<S> {
    /// 1-based evaluation index.
    pub iteration: usize,
    pub x: Vec<S>,
    pub y: Vec<S>,
    /// Score of the chosen point; None for the initial design and the
    /// random baseline.
    pub acquisition: Option<AcquisitionValue<S>>,
    /// Wall-clock seconds spent choosing and evaluating this point.
    /// Measurement only — excluded from the serialized trace so reruns stay
    /// byte-identical.
    #[serde(skip, default)]
    pub wall_seconds: f64,
}

/// Recommendation and its ground-truth score after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct IterationMetrics<S> {
    /// Evaluations consumed when this recommendation was made.
    pub iteration: usize,
    /// Recommended inputs: mean-feasible, mean-non-dominated truth-grid points.
    pub recommended_inputs: Vec<Vec<S>>,
    /// Hyper-averaged posterior-mean objective vectors of those inputs.
    pub recommended_front: Vec<Vec<S>>,
    /// Ground-truth hypervolume of the recommendation; 0 when it is empty or
    /// contains any truly infeasible point.
    pub hv_rec: S,
    /// `log((hv_star - hv_rec) / hv_star)`, floored at 1e-12.
    pub log_gap: S,
}

/// Complete record of one campaign; self-contained (the problem is embedded)
/// so scoring and replay need no side files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct RunTrace<S> {
    pub schema_version: u32,
    pub crate_version: String,
    pub config: RunConfig<S>,
    pub problem: BlackBoxProblem<S>,
    /// One record per evaluation; length = budget.
    pub records: Vec<EvalRecord<S>>,
    /// One entry per iteration from n_initial through budget.
    pub metrics: Vec<IterationMetrics<S>>,
}

/// Mean-feasible, mean-non-dominated recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Recommendation<S> {
    pub inputs: Vec<Vec<S>>,
    pub front: Vec<Vec<S>>,
}

/// Ground truth shared by every strategy at a given run seed; its grid
/// doubles as the recommendation grid, so recommended points always have
/// grid-exact truth values.
pub fn ground_truth_for<S: Scalar>(
    problem: &BlackBoxProblem<S>,
    seed: u64,
) -> Result<GroundTruth<S>> {
    let grid_seed: u64 = derive_rng(seed, &[TAG_PROBLEM, 1]).random();
    compute_ground_truth(problem, default_truth_grid_size(problem.domain.dim()), grid_seed)
}

/// Runs one campaign: `n_initial` quasi-random evaluations, then strategy
/// decisions up to `budget`, recommending and scoring after every iteration.
pub fn run<S: SampleScalar>(
    config: &RunConfig<S>,
    problem: &BlackBoxProblem<S>,
) -> Result<RunTrace<S>> {
    config.validate()?;
    let mut problem = problem.clone();
    if let Some(sd) = config.noise_override {
        problem.noise_sd = sd;
    }
    let truth = ground_truth_for(&problem, config.seed)?;
    let domain = problem.domain.clone();
    let acq_params = config.acquisition_params();

    let mut data = Dataset::new();
    let mut records: Vec<EvalRecord<S>> = Vec::with_capacity(config.budget);
    let mut metrics = Vec::with_capacity(config.budget - config.n_initial + 1);

    let init_seed: u64 = derive_rng(config.seed, &[TAG_INITIAL_DESIGN]).random();
    for x in qmc::scaled_points(config.n_initial, &domain.lower, &domain.upper, init_seed) {
        observe(&problem, config, &mut data, &mut records, x, None, Instant::now())?;
    }

    loop {
        let t = data.len();
        // Models fitted on the first t observations serve both this
        // iteration's recommendation and (for the entropy strategy) the next
        // decision, so the hyperparameter chains are sampled once.
        let ctx = if config.strategy == Strategy::Pesmoc && t < config.budget {
            Some(
                build_acquisition_context(
                    &domain,
                    problem.n_objectives,
                    problem.n_constraints,
                    &data,
                    &acq_params,
                    config.seed,
                    t as u64,
                )
                .map_err(|e| at_iteration(e, t))?,
            )
        } else {
            None
        };
        let hyper_gps: Vec<Vec<GpPosterior<S>>> = match &ctx {
            Some(c) => c.hyper.iter().map(|h| h.gps.clone()).collect(),
            None => sample_hyper_gps(
                &domain,
                problem.n_functions(),
                &data,
                config.n_hyper_samples,
                config.seed,
                t as u64,
            )
            .map_err(|e| at_iteration(e, t))?,
        };
        let rec = recommend(&hyper_gps, problem.n_objectives, &truth.grid);
        let (hv_rec, log_gap) =
            score_recommendation(&problem, &truth, &rec.inputs).map_err(|e| at_iteration(e, t))?;
        metrics.push(IterationMetrics {
            iteration: t,
            recommended_inputs: rec.inputs,
            recommended_front: rec.front,
            hv_rec,
            log_gap,
        });
        if t >= config.budget {
            break;
        }

        let started = Instant::now();
        let (x, acquisition) = match config.strategy {
            Strategy::Random => {
                let mut rng = derive_rng(config.seed, &[TAG_RANDOM_SEARCH, t as u64]);
                let x: Vec<S> = domain
                    .lower
                    .iter()
                    .zip(&domain.upper)
                    .map(|(&lo, &hi)| lo + (hi - lo) * S::unit_uniform(&mut rng))
                    .collect();
                (x, None)
            }
            Strategy::Pesmoc => {
                // A fallback context scores every point 0, so the maximizer
                // returns the pool's first quasi-random point: space-filling
                // exploration until a feasible Pareto draw appears.
                let c = ctx.as_ref().expect("context built for every decision");
                let mut rng = derive_rng(config.seed, &[TAG_SUBSAMPLE, t as u64]);
                let (x, value) = maximize_acquisition(c, config.pool_size, &mut rng)
                    .map_err(|e| at_iteration(e, t))?;
                (x, Some(value))
            }
        };
        observe(&problem, config, &mut data, &mut records, x, acquisition, started)?;
    }

    Ok(RunTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        problem,
        records,
        metrics,
    })
}

fn observe<S: SampleScalar>(
    problem: &BlackBoxProblem<S>,
    config: &RunConfig<S>,
    data: &mut Dataset<S>,
    records: &mut Vec<EvalRecord<S>>,
    x: Vec<S>,
    acquisition: Option<AcquisitionValue<S>>,
    started: Instant,
) -> Result<()> {
    let t = records.len() + 1;
    let mut noise_rng = derive_rng(config.seed, &[TAG_NOISE, t as u64]);
    let y = problem.evaluate(&x, &mut noise_rng).map_err(|e| at_iteration(e, t))?;
    data.push(Observation { x: x.clone(), y: y.clone() })?;
    records.push(EvalRecord {
        iteration: t,
        x,
        y,
        acquisition,
        wall_seconds: started.elapsed().as_secs_f64(),
    });
    Ok(())
}

/// Attach the failing iteration to an error's message.
fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::Numerical(s) => Error::Numerical(format!("iteration {iteration}: {s}")),
        Error::Config(s) => Error::Config(format!("iteration {iteration}: {s}")),
        Error::InvalidArgument(s) => Error::InvalidArgument(format!("iteration {iteration}: {s}")),
        other => other,
    }
}

/// Evaluates hyper-sample-averaged posterior means on the grid, keeps points
/// whose constraint means are all nonnegative, and returns the non-dominated
/// subset of their objective means.
pub fn recommend<S: SampleScalar>(
    hyper_gps: &[Vec<GpPosterior<S>>],
    n_objectives: usize,
    grid: &[Vec<S>],
) -> Recommendation<S> {
    if hyper_gps.is_empty() || grid.is_empty() {
        return Recommendation { inputs: Vec::new(), front: Vec::new() };
    }
    let n_fn = hyper_gps[0].len();
    let inv_h = S::one() / S::c(hyper_gps.len() as f64);
    let means: Vec<Vec<S>> = grid
        .par_iter()
        .map(|x| {
            (0..n_fn)
                .map(|f| {
                    hyper_gps.iter().fold(S::zero(), |acc, gps| acc + gps[f].predict_mean(x))
                        * inv_h
                })
                .collect()
        })
        .collect();
    let mut inputs = Vec::new();
    let mut objectives = Vec::new();
    for (x, m) in grid.iter().zip(&means) {
        if m[n_objectives..].iter().all(|&c| c >= S::zero()) {
            inputs.push(x.clone());
            objectives.push(m[..n_objectives].to_vec());
        }
    }
    let keep = pareto_front(&objectives);
    Recommendation {
        inputs: keep.iter().map(|&i| inputs[i].clone()).collect(),
        front: keep.iter().map(|&i| objectives[i].clone()).collect(),
    }
}

/// Ground-truth score of a recommendation: its true hypervolume (0 when
/// empty or containing any truly infeasible point) and the floored log
/// relative gap to the true front's hypervolume.
pub fn score_recommendation<S: Scalar>(
    problem: &BlackBoxProblem<S>,
    truth: &GroundTruth<S>,
    inputs: &[Vec<S>],
) -> Result<(S, S)> {
    let hv_rec = if inputs.is_empty() || inputs.iter().any(|x| !problem.is_feasible_true(x)) {
        S::zero()
    } else {
        let objectives: Vec<Vec<S>> = inputs.iter().map(|x| problem.true_objectives(x)).collect();
        let keep = pareto_front(&objectives);
        let front: Vec<Vec<S>> = keep.into_iter().map(|i| objectives[i].clone()).collect();
        hypervolume(&front, &truth.reference_point)?
    };
    let log_gap = log_relative_hv_gap(truth.hv_star, hv_rec, S::c(DEFAULT_GAP_FLOOR))?;
    Ok((hv_rec, log_gap))
}

/// Recomputes a trace's metric series from its embedded problem. For traces
/// produced by [`run`], the result equals the stored series exactly.
pub fn score_trace<S: SampleScalar>(trace: &RunTrace<S>) -> Result<Vec<IterationMetrics<S>>> {
    let truth = ground_truth_for(&trace.problem, trace.config.seed)?;
    let mut out = Vec::with_capacity(trace.metrics.len());
    for m in &trace.metrics {
        let (hv_rec, log_gap) =
            score_recommendation(&trace.problem, &truth, &m.recommended_inputs)?;
        out.push(IterationMetrics {
            iteration: m.iteration,
            recommended_inputs: m.recommended_inputs.clone(),
            recommended_front: m.recommended_front.clone(),
            hv_rec,
            log_gap,
        });
    }
    Ok(out)
}

/// Metric series as CSV (`iteration,hv_rec,log_gap`).
pub fn metrics_csv<S: Scalar>(metrics: &[IterationMetrics<S>]) -> String {
    let mut csv = String::from("iteration,hv_rec,log_gap\n");
    for m in metrics {
        csv.push_str(&format!("{},{},{}\n", m.iteration, m.hv_rec, m.log_gap));
    }
    csv
}

pub fn save_trace<S: Scalar + Serialize>(trace: &RunTrace<S>, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string(trace)?)?;
    Ok(())
}

pub fn load_trace<S: Scalar + DeserializeOwned>(path: &Path) -> Result<RunTrace<S>> {
    let trace: RunTrace<S> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if trace.schema_version != TRACE_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported trace schema version {} (expected {})",
            trace.schema_version, TRACE_SCHEMA_VERSION
        )));
    }
    Ok(trace)
}

/// Benchmark-suite configuration. Defaults are desk-scale: 10 problems of
/// d=3, K=2, C=2 at budget 40.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n_problems: usize,
    pub d: usize,
    pub k: usize,
    pub c: usize,
    pub budget: usize,
    pub n_initial: usize,
    pub scenario: Scenario,
    /// Run seeds; each (problem, seed) pair runs every strategy.
    pub seeds: Vec<u64>,
    /// Base of the problem-generation stream (problem i uses base + i,
    /// skipping draws with no feasible grid point).
    pub problem_seed: u64,
    /// Feature count of the generated problems' function expansions.
    pub n_problem_features: usize,
    pub n_hyper_samples: usize,
    pub n_pareto_samples: usize,
    pub pool_size: usize,
}

impl BenchmarkConfig {
    pub fn new(scenario: Scenario, seeds: Vec<u64>) -> Self {
        BenchmarkConfig {
            n_problems: 10,
            d: 3,
            k: 2,
            c: 2,
            budget: 40,
            n_initial: 3,
            scenario,
            seeds,
            problem_seed: 1000,
            n_problem_features: 500,
            n_hyper_samples: 10,
            n_pareto_samples: 10,
            pool_size: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_problems == 0 || self.seeds.is_empty() {
            return Err(Error::Config("need at least one problem and one seed".into()));
        }
        if self.k == 0 || self.k > 3 {
            return Err(Error::Config(format!(
                "hypervolume scoring supports 1..=3 objectives, got {}",
                self.k
            )));
        }
        self.run_config::<f64>(Strategy::Pesmoc, 0).validate()
    }

    fn run_config<S: Scalar>(&self, strategy: Strategy, seed: u64) -> RunConfig<S> {
        RunConfig {
            strategy,
            budget: self.budget,
            n_initial: self.n_initial,
            seed,
            noise_override: Some(self.scenario.noise_sd()),
            n_hyper_samples: self.n_hyper_samples,
            n_pareto_samples: self.n_pareto_samples,
            pool_size: self.pool_size,
        }
    }
}

/// One failed run, excluded from aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub problem: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub error: String,
}

/// Aggregate gap statistics at one iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct CurvePoint<S> {
    pub iteration: usize,
    pub mean_gap: S,
    /// Standard error of the mean (sample sd / sqrt(runs)); 0 for one run.
    pub stderr_gap: S,
    pub runs: usize,
}

/// A strategy's aggregate gap curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct StrategyCurve<S> {
    pub strategy: Strategy,
    pub points: Vec<CurvePoint<S>>,
}

/// Head-to-head outcome on one problem: final gaps averaged over the seeds
/// where both strategies completed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct ProblemOutcome<S> {
    pub problem: String,
    pub pesmoc_final_gap: S,
    pub random_final_gap: S,
    pub pesmoc_wins: bool,
}

/// Aggregated benchmark results.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct BenchmarkReport<S> {
    pub scenario: Scenario,
    pub budget: usize,
    pub n_initial: usize,
    pub problems: Vec<String>,
    /// Generation seeds discarded because the draw had no feasible grid point.
    pub skipped_problem_seeds: Vec<u64>,
    pub curves: Vec<StrategyCurve<S>>,
    pub outcomes: Vec<ProblemOutcome<S>>,
    /// Problems where the entropy strategy's final mean gap is lower.
    pub pesmoc_wins: usize,
    pub failures: Vec<RunFailure>,
}

/// Runs every strategy on every (problem, seed) pair with paired seeds and
/// aggregates gap curves, per-problem outcomes, and failures. Runs execute
/// concurrently; each is internally deterministic.
pub fn run_benchmark<S: SampleScalar>(cfg: &BenchmarkConfig) -> Result<BenchmarkReport<S>> {
    cfg.validate()?;
    let hp = default_synthetic_hp(&BoxDomain::<S>::unit(cfg.d));
    let mut problems: Vec<BlackBoxProblem<S>> = Vec::with_capacity(cfg.n_problems);
    let mut skipped_problem_seeds = Vec::new();
    let mut gen_seed = cfg.problem_seed;
    while problems.len() < cfg.n_problems {
        if skipped_problem_seeds.len() > 20 * cfg.n_problems {
            return Err(Error::Numerical(format!(
                "gave up generating feasible problems after {} infeasible draws",
                skipped_problem_seeds.len()
            )));
        }
        let problem =
            sample_synthetic_problem(cfg.d, cfg.k, cfg.c, &hp, cfg.n_problem_features, gen_seed)?;
        // Screen with the first run seed; a draw whose constraints are
        // negative on the whole truth grid has no scorable optimum.
        match ground_truth_for(&problem, cfg.seeds[0]) {
            Ok(_) => problems.push(problem),
            Err(Error::EmptyFeasibleSet) => skipped_problem_seeds.push(gen_seed),
            Err(e) => return Err(e),
        }
        gen_seed += 1;
    }

    let strategies = [Strategy::Pesmoc, Strategy::Random];
    let jobs: Vec<(usize, Strategy, u64)> = problems
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            strategies.iter().flat_map(move |&s| cfg.seeds.iter().map(move |&seed| (i, s, seed)))
        })
        .collect();
    let results: Vec<((usize, Strategy, u64), Result<RunTrace<S>>)> = jobs
        .par_iter()
        .map(|&(i, strategy, seed)| {
            let config = cfg.run_config::<S>(strategy, seed);
            ((i, strategy, seed), run(&config, &problems[i]))
        })
        .collect();

    let mut failures = Vec::new();
    let mut traces: Vec<((usize, Strategy, u64), RunTrace<S>)> = Vec::new();
    for ((i, strategy, seed), result) in results {
        match result {
            Ok(trace) => traces.push(((i, strategy, seed), trace)),
            Err(e) => failures.push(RunFailure {
                problem: problems[i].name.clone(),
                strategy,
                seed,
                error: e.to_string(),
            }),
        }
    }

    let iterations: Vec<usize> = (cfg.n_initial..=cfg.budget).collect();
    let mut curves = Vec::new();
    for &strategy in &strategies {
        let gaps_per_run: Vec<&RunTrace<S>> = traces
            .iter()
            .filter(|((_, s, _), _)| *s == strategy)
            .map(|(_, trace)| trace)
            .collect();
        let points = iterations
            .iter()
            .enumerate()
            .map(|(idx, &iteration)| {
                let gaps: Vec<S> =
                    gaps_per_run.iter().map(|t| t.metrics[idx].log_gap).collect();
                let (mean_gap, stderr_gap) = mean_stderr(&gaps);
                CurvePoint { iteration, mean_gap, stderr_gap, runs: gaps.len() }
            })
            .collect();
        curves.push(StrategyCurve { strategy, points });
    }

    let mut outcomes = Vec::new();
    for (i, problem) in problems.iter().enumerate() {
        let final_gap = |strategy: Strategy, seed: u64| -> Option<S> {
            traces
                .iter()
                .find(|((pi, s, sd), _)| *pi == i && *s == strategy && *sd == seed)
                .map(|(_, t)| t.metrics.last().expect("metrics nonempty").log_gap)
        };
        let mut pesmoc_finals = Vec::new();
        let mut random_finals = Vec::new();
        for &seed in &cfg.seeds {
            // Paired comparison: keep seeds where both strategies completed.
            if let (Some(p), Some(r)) =
                (final_gap(Strategy::Pesmoc, seed), final_gap(Strategy::Random, seed))
            {
                pesmoc_finals.push(p);
                random_finals.push(r);
            }
        }
        if pesmoc_finals.is_empty() {
            continue;
        }
        let (pesmoc_final_gap, _) = mean_stderr(&pesmoc_finals);
        let (random_final_gap, _) = mean_stderr(&random_finals);
        outcomes.push(ProblemOutcome {
            problem: problem.name.clone(),
            pesmoc_final_gap,
            random_final_gap,
            pesmoc_wins: pesmoc_final_gap < random_final_gap,
        });
    }
    let pesmoc_wins = outcomes.iter().filter(|o| o.pesmoc_wins).count();

    Ok(BenchmarkReport {
        scenario: cfg.scenario,
        budget: cfg.budget,
        n_initial: cfg.n_initial,
        problems: problems.iter().map(|p| p.name.clone()).collect(),
        skipped_problem_seeds,
        curves,
        outcomes,
        pesmoc_wins,
        failures,
    })
}

fn mean_stderr<S: Scalar>(values: &[S]) -> (S, S) {
    let n = values.len();
    if n == 0 {
        return (S::zero(), S::zero());
    }
    let mean = values.iter().fold(S::zero(), |a, &b| a + b) / S::c(n as f64);
    if n == 1 {
        return (mean, S::zero());
    }
    let var = values.iter().fold(S::zero(), |a, &b| a + (b - mean) * (b - mean))
        / S::c((n - 1) as f64);
    (mean, (var / S::c(n as f64)).sqrt())
}

/// Writes a report directory: one `<strategy>.csv` gap curve per strategy
/// (`iteration,mean_gap,stderr_gap,runs`) plus `summary.json`.
pub fn write_report<S: Scalar + Serialize>(report: &BenchmarkReport<S>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for curve in &report.curves {
        let mut csv = String::from("iteration,mean_gap,stderr_gap,runs\n");
        for p in &curve.points {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.iteration, p.mean_gap, p.stderr_gap, p.runs
            ));
        }
        std::fs::write(dir.join(format!("{}.csv", curve.strategy)), csv)?;
    }
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}
