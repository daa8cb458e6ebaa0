//! Optimization problems: the two-objective toy problem, synthetic problems
//! drawn from a GP prior, observation bookkeeping, and ground-truth fronts
//! for scoring. Output layout everywhere: objectives first, then
//! constraints, all under a minimize-objectives / constraint-nonnegative
//! convention.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{draw_prior_function, FunctionSample, HyperParams};
use crate::pareto::{hypervolume, pareto_front};
use crate::qmc;
use crate::rng::{derive_rng, TAG_PROBLEM};
use crate::scalar::{SampleScalar, Scalar};

/// Axis-aligned box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct BoxDomain<S> {
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

impl<S: Scalar> BoxDomain<S> {
    pub fn new(lower: Vec<S>, upper: Vec<S>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "domain needs matching non-empty bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "domain bound {i} is empty: [{lo}, {hi}]"
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain { lower: vec![S::zero(); dim], upper: vec![S::one(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn widths(&self) -> Vec<S> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| u - l).collect()
    }

    pub fn contains(&self, x: &[S]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (i, &v) in x.iter().enumerate() {
            if v < self.lower[i] || v > self.upper[i] || !v.is_finite() {
                return Err(Error::OutOfDomain { coord: i });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [S]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = (*v).max(self.lower[i]).min(self.upper[i]);
        }
    }
}

/// The underlying noiseless evaluators of a problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemFunctions<S> {
    /// `f1 = x y`, `f2 = -x y`, constraints `x >= 0` and `y >= 0`.
    Toy,
    /// Independent whole-function draws from a GP prior, stored as their
    /// finite feature expansions so they are exactly evaluable anywhere.
    Synthetic {
        objectives: Vec<FunctionSample<S>>,
        constraints: Vec<FunctionSample<S>>,
    },
}

/// A black-box problem: minimize K objectives subject to C constraints
/// being nonnegative, observing every output with i.i.d. Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct BlackBoxProblem<S> {
    pub name: String,
    pub domain: BoxDomain<S>,
    pub n_objectives: usize,
    pub n_constraints: usize,
    pub noise_sd: S,
    pub functions: ProblemFunctions<S>,
    /// Generating kernel hyperparameters (synthetic problems only).
    pub kernel_hp: Option<HyperParams<S>>,
    /// Generating seed (synthetic problems only); informational, the
    /// function expansions above are authoritative.
    pub seed: Option<u64>,
}

impl<S: Scalar> BlackBoxProblem<S> {
    pub fn n_functions(&self) -> usize {
        self.n_objectives + self.n_constraints
    }

    /// True value of output `fn_index` (objectives first, then constraints).
    fn raw(&self, fn_index: usize, x: &[S]) -> S {
        match &self.functions {
            ProblemFunctions::Toy => match fn_index {
                0 => x[0] * x[1],
                1 => -(x[0] * x[1]),
                2 => x[0],
                3 => x[1],
                _ => unreachable!("toy problem has 4 outputs"),
            },
            ProblemFunctions::Synthetic { objectives, constraints } => {
                if fn_index < objectives.len() {
                    objectives[fn_index].eval(x)
                } else {
                    constraints[fn_index - objectives.len()].eval(x)
                }
            }
        }
    }

    /// All K+C true (noiseless) outputs at `x`.
    pub fn evaluate_true(&self, x: &[S]) -> Result<Vec<S>> {
        self.domain.contains(x)?;
        Ok((0..self.n_functions()).map(|i| self.raw(i, x)).collect())
    }

    /// All K+C outputs at `x`, each contaminated with independent Gaussian
    /// noise of standard deviation `noise_sd`.
    pub fn evaluate(&self, x: &[S], rng: &mut ChaCha8Rng) -> Result<Vec<S>>
    where
        S: SampleScalar,
    {
        let mut y = self.evaluate_true(x)?;
        if self.noise_sd > S::zero() {
            for v in &mut y {
                *v = *v + self.noise_sd * S::std_normal(rng);
            }
        }
        Ok(y)
    }

    pub fn true_objectives(&self, x: &[S]) -> Vec<S> {
        (0..self.n_objectives).map(|k| self.raw(k, x)).collect()
    }

    pub fn true_constraints(&self, x: &[S]) -> Vec<S> {
        (0..self.n_constraints).map(|j| self.raw(self.n_objectives + j, x)).collect()
    }

    pub fn is_feasible_true(&self, x: &[S]) -> bool {
        self.true_constraints(x).iter().all(|&c| c >= S::zero())
    }
}

/// The paper-style toy problem on `[-10, 10]^2` with feasible box
/// `[0, 10]^2`; noiseless by default.
pub fn make_toy_problem<S: Scalar>() -> BlackBoxProblem<S> {
    BlackBoxProblem {
        name: "toy".to_string(),
        domain: BoxDomain::new(vec![S::c(-10.0); 2], vec![S::c(10.0); 2]).unwrap(),
        n_objectives: 2,
        n_constraints: 2,
        noise_sd: S::zero(),
        functions: ProblemFunctions::Toy,
        kernel_hp: None,
        seed: None,
    }
}

/// Draw a synthetic problem: `k + c` independent GP-prior function samples
/// on the unit cube, realized as finite feature expansions.
pub fn sample_synthetic_problem<S: SampleScalar>(
    d: usize,
    k: usize,
    c: usize,
    kernel_hp: &HyperParams<S>,
    n_features: usize,
    seed: u64,
) -> Result<BlackBoxProblem<S>> {
    if d < 1 || k < 1 || n_features < 1 {
        return Err(Error::InvalidArgument(format!(
            "need d >= 1, k >= 1, n_features >= 1; got d={d}, k={k}, n_features={n_features}"
        )));
    }
    if kernel_hp.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: kernel_hp.dim() });
    }
    let mut rng = derive_rng(seed, &[TAG_PROBLEM]);
    let objectives: Vec<FunctionSample<S>> =
        (0..k).map(|_| draw_prior_function(kernel_hp, n_features, &mut rng)).collect();
    let constraints: Vec<FunctionSample<S>> =
        (0..c).map(|_| draw_prior_function(kernel_hp, n_features, &mut rng)).collect();
    Ok(BlackBoxProblem {
        name: format!("synthetic-d{d}k{k}c{c}-{seed}"),
        domain: BoxDomain::unit(d),
        n_objectives: k,
        n_constraints: c,
        noise_sd: S::zero(),
        functions: ProblemFunctions::Synthetic { objectives, constraints },
        kernel_hp: Some(kernel_hp.clone()),
        seed: Some(seed),
    })
}

/// Default generating hyperparameters for synthetic problems: unit
/// amplitude, lengthscales at a quarter of each axis width, noiseless.
pub fn default_synthetic_hp<S: Scalar>(domain: &BoxDomain<S>) -> HyperParams<S> {
    HyperParams {
        amplitude: S::one(),
        lengthscales: domain.widths().iter().map(|&w| w * S::c(0.25)).collect(),
        noise_var: S::zero(),
    }
}

/// One observed evaluation: input and the K+C noisy outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Observation<S> {
    pub x: Vec<S>,
    pub y: Vec<S>,
}

/// Ordered collection of observations with a consistent shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Dataset<S> {
    pub observations: Vec<Observation<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new() -> Self {
        Dataset { observations: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn push(&mut self, obs: Observation<S>) -> Result<()> {
        if let Some(first) = self.observations.first() {
            if obs.x.len() != first.x.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.x.len(),
                    got: obs.x.len(),
                });
            }
            if obs.y.len() != first.y.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.y.len(),
                    got: obs.y.len(),
                });
            }
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn inputs(&self) -> Vec<Vec<S>> {
        self.observations.iter().map(|o| o.x.clone()).collect()
    }

    /// All observed values of one output (objectives first, constraints
    /// after), in observation order.
    pub fn column(&self, fn_index: usize) -> Vec<S> {
        self.observations.iter().map(|o| o.y[fn_index]).collect()
    }
}

/// Grid-based truth about a problem: the true feasible front and its
/// hypervolume, against a fixed reference point shared by all strategies.
#[derive(Debug, Clone)]
pub struct GroundTruth<S> {
    pub grid: Vec<Vec<S>>,
    pub front_inputs: Vec<Vec<S>>,
    pub pareto_front: Vec<Vec<S>>,
    pub reference_point: Vec<S>,
    pub hv_star: S,
}

/// Truth-grid size: 10,000 points up to three dimensions, shrunk
/// proportionally above that.
pub fn default_truth_grid_size(d: usize) -> usize {
    if d <= 3 {
        10_000
    } else {
        10_000 * 3 / d
    }
}

/// Evaluate the true functions on a low-discrepancy grid, keep the feasible
/// points, and extract the true front, reference point, and hypervolume.
/// The reference point is the per-objective feasible maximum plus a 1%
/// margin of the feasible range, so every front point strictly dominates it.
pub fn compute_ground_truth<S: Scalar>(
    problem: &BlackBoxProblem<S>,
    grid_size: usize,
    seed: u64,
) -> Result<GroundTruth<S>> {
    let grid = qmc::scaled_points(
        grid_size,
        &problem.domain.lower,
        &problem.domain.upper,
        seed,
    );
    let mut feasible_inputs = Vec::new();
    let mut feasible_objectives = Vec::new();
    for x in &grid {
        if problem.is_feasible_true(x) {
            feasible_inputs.push(x.clone());
            feasible_objectives.push(problem.true_objectives(x));
        }
    }
    if feasible_inputs.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    let k = problem.n_objectives;
    let mut reference_point = Vec::with_capacity(k);
    for obj in 0..k {
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for f in &feasible_objectives {
            lo = lo.min(f[obj]);
            hi = hi.max(f[obj]);
        }
        let margin = (hi - lo) * S::c(0.01);
        reference_point.push(hi + margin);
    }
    let front_idx = pareto_front(&feasible_objectives);
    let front_inputs: Vec<Vec<S>> =
        front_idx.iter().map(|&i| feasible_inputs[i].clone()).collect();
    let front: Vec<Vec<S>> =
        front_idx.iter().map(|&i| feasible_objectives[i].clone()).collect();
    let hv_star = hypervolume(&front, &reference_point)?;
    Ok(GroundTruth {
        grid,
        front_inputs,
        pareto_front: front,
        reference_point,
        hv_star,
    })
}

/// Serialized problem file: everything needed for exact reload.
#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
struct ProblemFile<S> {
    schema_version: u32,
    problem: BlackBoxProblem<S>,
}

const PROBLEM_SCHEMA_VERSION: u32 = 1;

pub fn save_problem<S: Scalar + Serialize>(
    problem: &BlackBoxProblem<S>,
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(file),
        &ProblemFile { schema_version: PROBLEM_SCHEMA_VERSION, problem: problem.clone() },
    )?;
    Ok(())
}

pub fn load_problem<S: Scalar + for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<BlackBoxProblem<S>> {
    let file = std::fs::File::open(path)?;
    let parsed: ProblemFile<S> = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Config(format!("failed to parse problem file: {e}")))?;
    if parsed.schema_version != PROBLEM_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported problem schema version {} (expected {})",
            parsed.schema_version, PROBLEM_SCHEMA_VERSION
        )));
    }
    let p = parsed.problem;
    if p.n_objectives < 1 {
        return Err(Error::Config("problem needs at least one objective".into()));
    }
    BoxDomain::new(p.domain.lower.clone(), p.domain.upper.clone())
        .map_err(|e| Error::Config(format!("invalid domain in problem file: {e}")))?;
    match &p.functions {
        ProblemFunctions::Toy => {
            if p.n_objectives != 2 || p.n_constraints != 2 || p.domain.dim() != 2 {
                return Err(Error::Config("toy problem must have d=2, K=2, C=2".into()));
            }
        }
        ProblemFunctions::Synthetic { objectives, constraints } => {
            if objectives.len() != p.n_objectives || constraints.len() != p.n_constraints {
                return Err(Error::Config(format!(
                    "function counts ({}, {}) disagree with declared K={}, C={}",
                    objectives.len(),
                    constraints.len(),
                    p.n_objectives,
                    p.n_constraints
                )));
            }
        }
    }
    Ok(p)
}
