//! Entropy-reduction acquisition over sampled constrained Pareto sets.
//!
//! A candidate x is scored by how much observing it is expected to shrink the
//! entropy of the optimum: the Gaussian entropy of the predictive at x minus
//! its average after conditioning on sampled feasible Pareto sets, where the
//! conditioning is the expectation-propagation approximation from [`crate::ep`].
//! Both entropies factorize across the K + C latent functions, so the score
//! decomposes exactly into one term per objective and per constraint:
//!
//! `alpha(x) = sum_fn [ 0.5 log v_pd(x) - mean_m 0.5 log v_cpd(x | sample m) ]`
//!
//! averaged over hyperparameter posterior samples. The per-function terms are
//! exposed for decoupled analysis; their sum is the coupled acquisition.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ep::{self, EpOptions, EpState, FactorGraph};
use crate::error::{Error, Result};
use crate::gp::{
    draw_posterior_function, noise_floor, slice_sample_hyperparams, GpPosterior, HyperParams,
    HyperPriors,
};
use crate::pareto::{extract_pareto_sample, ParetoSample};
use crate::problem::{BoxDomain, Dataset};
use crate::qmc;
use crate::rng::{derive_rng, TAG_CANDIDATE_POOL, TAG_HYPERS, TAG_PARETO_SAMPLE, TAG_SUBSAMPLE};
use crate::scalar::{SampleScalar, Scalar};

/// Tunable sizes for building and optimizing the acquisition.
#[derive(Debug, Clone)]
pub struct AcquisitionParams {
    /// Hyperparameter posterior samples averaged over.
    pub n_hyper_samples: usize,
    /// Pareto-set Monte Carlo samples per hyperparameter sample.
    pub n_pareto_samples: usize,
    /// Quasi-random grid size for each Pareto-set extraction.
    pub pareto_grid_size: usize,
    /// Cap on the number of points kept from each sampled Pareto set.
    pub pareto_cap: usize,
    /// Random-feature count for posterior function draws.
    pub n_features: usize,
    /// Quasi-random candidate-pool size for acquisition maximization.
    pub pool_size: usize,
    /// Maximum coordinate pattern-search rounds after the pool scan.
    pub max_pattern_steps: usize,
    /// Total Pareto-draw attempts allowed, as a multiple of
    /// `n_pareto_samples`; draws whose sampled constraints are negative
    /// everywhere are discarded and retried within this allowance.
    pub resample_factor: usize,
    /// Expectation-propagation schedule for conditioning each sample.
    pub ep: EpOptions,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        AcquisitionParams {
            n_hyper_samples: 10,
            n_pareto_samples: 10,
            pareto_grid_size: 1000,
            pareto_cap: 50,
            n_features: 500,
            pool_size: 1000,
            max_pattern_steps: 50,
            resample_factor: 3,
            ep: EpOptions::default(),
        }
    }
}

impl AcquisitionParams {
    /// All counts must be at least one.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_hyper_samples", self.n_hyper_samples),
            ("n_pareto_samples", self.n_pareto_samples),
            ("pareto_grid_size", self.pareto_grid_size),
            ("pareto_cap", self.pareto_cap),
            ("n_features", self.n_features),
            ("pool_size", self.pool_size),
            ("resample_factor", self.resample_factor),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// One sampled Pareto set together with its converged conditioning.
#[derive(Debug, Clone)]
pub struct ParetoState<S: SampleScalar> {
    pub pareto: ParetoSample<S>,
    pub graph: FactorGraph<S>,
    pub state: EpState<S>,
}

/// Everything derived from one hyperparameter posterior sample.
#[derive(Debug, Clone)]
pub struct HyperState<S: SampleScalar> {
    /// Fitted posteriors, objectives first, then constraints.
    pub gps: Vec<GpPosterior<S>>,
    /// Conditioned Pareto-set samples; empty when every draw for this
    /// hyperparameter sample was infeasible.
    pub pareto_states: Vec<ParetoState<S>>,
}

/// Prepared per-iteration state for scoring candidate points.
///
/// Immutable once built; evaluations at distinct points are independent and
/// run in parallel across the candidate pool.
#[derive(Debug, Clone)]
pub struct AcquisitionContext<S: SampleScalar> {
    pub domain: BoxDomain<S>,
    pub n_objectives: usize,
    pub n_constraints: usize,
    pub params: AcquisitionParams,
    pub hyper: Vec<HyperState<S>>,
    /// True when no hyperparameter sample yielded a feasible Pareto draw; the
    /// acquisition is then identically zero and callers should fall back to
    /// space-filling exploration.
    pub fallback: bool,
    /// Pareto draws discarded because the sampled constraints were negative
    /// on the whole extraction grid.
    pub failed_draws: usize,
    /// Run seed all internal streams are derived from.
    pub seed: u64,
    /// Iteration index mixed into every derived stream.
    pub iteration: u64,
}

impl<S: SampleScalar> AcquisitionContext<S> {
    pub fn n_functions(&self) -> usize {
        self.n_objectives + self.n_constraints
    }
}

/// Acquisition score at one point, with its exact per-function breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct AcquisitionValue<S> {
    /// Sum of all per-function terms (exact identity by construction).
    pub total: S,
    pub per_objective: Vec<S>,
    pub per_constraint: Vec<S>,
    /// Mirrors [`AcquisitionContext::fallback`]: the score carries no
    /// information because no Pareto sample survived.
    pub fallback: bool,
}

/// Per-function argmax over the candidate pool, in objectives-then-constraints
/// order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct DecoupledChoice<S> {
    pub fn_index: usize,
    pub point: Vec<S>,
    pub value: S,
}

/// Slice-sample posterior hyperparameters per latent function (independent
/// chains) and fit one GP per function per sample: the model ensemble behind
/// both the acquisition and posterior-mean recommendations.
pub fn sample_hyper_gps<S: SampleScalar>(
    domain: &BoxDomain<S>,
    n_functions: usize,
    data: &Dataset<S>,
    n_samples: usize,
    seed: u64,
    iteration: u64,
) -> Result<Vec<Vec<GpPosterior<S>>>> {
    let priors = HyperPriors::default_for_domain(&domain.widths());
    let xs = data.inputs();
    let mut per_fn: Vec<Vec<HyperParams<S>>> = Vec::with_capacity(n_functions);
    for fn_idx in 0..n_functions {
        let mut rng = derive_rng(seed, &[TAG_HYPERS, iteration, fn_idx as u64]);
        per_fn.push(slice_sample_hyperparams(
            &xs,
            &data.column(fn_idx),
            &priors,
            n_samples,
            &mut rng,
        ));
    }
    let mut out = Vec::with_capacity(n_samples);
    for h in 0..n_samples {
        let mut gps = Vec::with_capacity(n_functions);
        for (fn_idx, chain) in per_fn.iter().enumerate() {
            gps.push(GpPosterior::fit(chain[h].clone(), xs.clone(), data.column(fn_idx))?);
        }
        out.push(gps);
    }
    Ok(out)
}

/// Entropy of a factorized Gaussian with the given marginal variances:
/// `(n/2) log(2 pi e) + 0.5 sum log v_i`.
pub fn predictive_entropy<S: Scalar>(variances: &[S]) -> Result<S> {
    let mut log_sum = S::zero();
    for &v in variances {
        if !(v > S::zero()) {
            return Err(Error::Numerical(format!(
                "predictive entropy needs positive variances, got {v}"
            )));
        }
        log_sum = log_sum + v.ln();
    }
    let tau = S::c(2.0 * std::f64::consts::PI * std::f64::consts::E);
    Ok(S::c(0.5) * (S::c(variances.len() as f64) * tau.ln() + log_sum))
}

/// Builds the per-iteration acquisition state from the observed data:
/// samples hyperparameters, fits one GP per function and sample, draws
/// Pareto sets from posterior function samples, and conditions each with
/// expectation propagation.
pub fn build_acquisition_context<S: SampleScalar>(
    domain: &BoxDomain<S>,
    n_objectives: usize,
    n_constraints: usize,
    data: &Dataset<S>,
    params: &AcquisitionParams,
    seed: u64,
    iteration: u64,
) -> Result<AcquisitionContext<S>> {
    params.validate()?;
    let n_fn = n_objectives + n_constraints;
    if n_objectives == 0 {
        return Err(Error::Config("need at least one objective".into()));
    }
    for obs in &data.observations {
        if obs.x.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: obs.x.len() });
        }
        if obs.y.len() != n_fn {
            return Err(Error::DimensionMismatch { expected: n_fn, got: obs.y.len() });
        }
    }

    let hyper_gps = sample_hyper_gps(domain, n_fn, data, params.n_hyper_samples, seed, iteration)?;

    let mut hyper = Vec::with_capacity(params.n_hyper_samples);
    let mut failed_draws = 0usize;
    for (h, gps) in hyper_gps.into_iter().enumerate() {
        let mut pareto_states: Vec<ParetoState<S>> = Vec::with_capacity(params.n_pareto_samples);
        let max_attempts = params.n_pareto_samples * params.resample_factor;
        let mut attempts = 0usize;
        while pareto_states.len() < params.n_pareto_samples && attempts < max_attempts {
            let mut draw_rng =
                derive_rng(seed, &[TAG_PARETO_SAMPLE, iteration, h as u64, attempts as u64]);
            attempts += 1;
            let grid_seed: u64 = draw_rng.random();
            let grid = qmc::scaled_points(
                params.pareto_grid_size,
                &domain.lower,
                &domain.upper,
                grid_seed,
            );
            let mut draws = Vec::with_capacity(n_fn);
            for gp in &gps {
                draws.push(draw_posterior_function(gp, params.n_features, &mut draw_rng)?);
            }
            let cons = draws.split_off(n_objectives);
            let obj_fns: Vec<Box<dyn Fn(&[S]) -> S + Sync>> =
                draws.iter().map(|f| Box::new(move |x: &[S]| f.eval(x)) as _).collect();
            let con_fns: Vec<Box<dyn Fn(&[S]) -> S + Sync>> =
                cons.iter().map(|f| Box::new(move |x: &[S]| f.eval(x)) as _).collect();
            match extract_pareto_sample(&obj_fns, &con_fns, &grid, params.pareto_cap, &mut draw_rng)
            {
                Ok(pareto) => {
                    let graph = ep::build_factor_graph(&gps, n_objectives, &pareto, data, None)?;
                    let state = ep::ep_converge_fixed(&graph, &params.ep);
                    pareto_states.push(ParetoState { pareto, graph, state });
                }
                Err(Error::InfeasibleSample) => {
                    failed_draws += 1;
                    log::debug!(
                        "iteration {iteration}, hyper-sample {h}: infeasible Pareto draw \
                         (attempt {attempts})"
                    );
                }
                Err(e) => return Err(e),
            }
        }
        if pareto_states.is_empty() {
            log::warn!(
                "iteration {iteration}, hyper-sample {h}: every Pareto draw infeasible after \
                 {max_attempts} attempts"
            );
        }
        hyper.push(HyperState { gps, pareto_states });
    }

    let fallback = hyper.iter().all(|h| h.pareto_states.is_empty());
    if fallback {
        log::warn!("iteration {iteration}: acquisition has no Pareto samples, falling back to 0");
    }
    Ok(AcquisitionContext {
        domain: domain.clone(),
        n_objectives,
        n_constraints,
        params: params.clone(),
        hyper,
        fallback,
        failed_draws,
        seed,
        iteration,
    })
}

/// Scores one candidate point.
///
/// Per hyperparameter sample: `0.5 log v_pd - mean_m 0.5 log v_cpd` for each
/// function, with the observation-noise floor added to both variances so a
/// candidate the samples say nothing about scores zero. Hyperparameter
/// samples whose Pareto draws all failed contribute zero. The total is the
/// sum of the per-function parts by construction.
pub fn evaluate_acquisition<S: SampleScalar>(
    ctx: &AcquisitionContext<S>,
    x: &[S],
) -> Result<AcquisitionValue<S>> {
    if x.len() != ctx.domain.dim() {
        return Err(Error::DimensionMismatch { expected: ctx.domain.dim(), got: x.len() });
    }
    let n_fn = ctx.n_functions();
    let mut parts = vec![S::zero(); n_fn];
    if !ctx.fallback && !ctx.hyper.is_empty() {
        let h_weight = S::one() / S::c(ctx.hyper.len() as f64);
        for hs in &ctx.hyper {
            if hs.pareto_states.is_empty() {
                continue;
            }
            let m_weight = S::one() / S::c(hs.pareto_states.len() as f64);
            let mut cpd_log = vec![S::zero(); n_fn];
            for ps in &hs.pareto_states {
                let pred = ep::condition_candidate(&ps.state, &ps.graph, x)?;
                for (k, &v) in pred.obj_var.iter().enumerate() {
                    cpd_log[k] = cpd_log[k] + positive_log(v)?;
                }
                for (j, &v) in pred.con_var.iter().enumerate() {
                    cpd_log[ctx.n_objectives + j] = cpd_log[ctx.n_objectives + j] + positive_log(v)?;
                }
            }
            for (fn_idx, gp) in hs.gps.iter().enumerate() {
                let (_, var) = gp.predict(x);
                let pd_log = positive_log(var + noise_floor(gp.noise_var()))?;
                parts[fn_idx] =
                    parts[fn_idx] + h_weight * S::c(0.5) * (pd_log - m_weight * cpd_log[fn_idx]);
            }
        }
    }
    Ok(assemble_value(ctx, parts))
}

fn positive_log<S: Scalar>(v: S) -> Result<S> {
    if !(v > S::zero()) {
        return Err(Error::Numerical(format!("non-positive predictive variance {v}")));
    }
    Ok(v.ln())
}

fn assemble_value<S: SampleScalar>(ctx: &AcquisitionContext<S>, parts: Vec<S>) -> AcquisitionValue<S> {
    let total = parts.iter().fold(S::zero(), |a, &b| a + b);
    let per_constraint = parts[ctx.n_objectives..].to_vec();
    let mut per_objective = parts;
    per_objective.truncate(ctx.n_objectives);
    AcquisitionValue { total, per_objective, per_constraint, fallback: ctx.fallback }
}

/// Candidate pool for maximization: `pool_size` quasi-random points from the
/// iteration-indexed stream, plus the sampled Pareto-set inputs subsampled
/// with `rng` to at most half the pool size.
pub fn candidate_pool<S: SampleScalar>(
    ctx: &AcquisitionContext<S>,
    pool_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<S>> {
    let pool_seed: u64 =
        derive_rng(ctx.seed, &[TAG_CANDIDATE_POOL, ctx.iteration]).random();
    let mut pool =
        qmc::scaled_points(pool_size, &ctx.domain.lower, &ctx.domain.upper, pool_seed);
    let extras: Vec<&Vec<S>> = ctx
        .hyper
        .iter()
        .flat_map(|h| &h.pareto_states)
        .flat_map(|ps| &ps.pareto.points)
        .collect();
    let cap = pool_size / 2;
    if extras.len() > cap {
        let mut keep = rand::seq::index::sample(rng, extras.len(), cap).into_vec();
        keep.sort_unstable();
        pool.extend(keep.into_iter().map(|i| extras[i].clone()));
    } else {
        pool.extend(extras.into_iter().cloned());
    }
    pool
}

/// Maximizes the acquisition: scans the candidate pool, then refines the best
/// pool point with a coordinate pattern search (steps of 5% of each axis
/// width, halved whenever no axis move improves, clamped to the domain).
/// Ties are broken by the first index, so the argmax is well-defined even for
/// a constant acquisition.
pub fn maximize_acquisition<S: SampleScalar>(
    ctx: &AcquisitionContext<S>,
    pool_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<S>, AcquisitionValue<S>)> {
    if pool_size == 0 {
        return Err(Error::Config("pool_size must be at least 1".into()));
    }
    let pool = candidate_pool(ctx, pool_size, rng);
    let values = evaluate_pool(ctx, &pool)?;
    let mut best = 0;
    for i in 1..values.len() {
        if values[i].total > values[best].total {
            best = i;
        }
    }
    let mut x = pool[best].clone();
    let mut value = values[best].clone();

    let mut steps: Vec<S> = ctx.domain.widths().iter().map(|&w| w * S::c(0.05)).collect();
    for _ in 0..ctx.params.max_pattern_steps {
        let mut neighbors = Vec::with_capacity(2 * x.len());
        for d in 0..x.len() {
            for sign in [S::one(), -S::one()] {
                let moved =
                    (x[d] + sign * steps[d]).max(ctx.domain.lower[d]).min(ctx.domain.upper[d]);
                if moved != x[d] {
                    let mut y = x.clone();
                    y[d] = moved;
                    neighbors.push(y);
                }
            }
        }
        let neighbor_values = evaluate_pool(ctx, &neighbors)?;
        let mut best_neighbor: Option<usize> = None;
        for (i, nv) in neighbor_values.iter().enumerate() {
            let beats_current = nv.total > value.total;
            let beats_best = best_neighbor.is_none_or(|b| nv.total > neighbor_values[b].total);
            if beats_current && beats_best {
                best_neighbor = Some(i);
            }
        }
        match best_neighbor {
            Some(i) => {
                x = neighbors[i].clone();
                value = neighbor_values[i].clone();
            }
            None => {
                for s in &mut steps {
                    *s = *s * S::c(0.5);
                }
            }
        }
    }
    Ok((x, value))
}

/// Per-function argmax of the acquisition parts over the candidate pool, in
/// objectives-then-constraints order. Analysis output: the driver always
/// evaluates all functions at the coupled argmax.
pub fn decoupled_argmax<S: SampleScalar>(
    ctx: &AcquisitionContext<S>,
) -> Result<Vec<DecoupledChoice<S>>> {
    let mut rng = derive_rng(ctx.seed, &[TAG_SUBSAMPLE, ctx.iteration]);
    let pool = candidate_pool(ctx, ctx.params.pool_size, &mut rng);
    let values = evaluate_pool(ctx, &pool)?;
    let part = |v: &AcquisitionValue<S>, fn_idx: usize| {
        if fn_idx < ctx.n_objectives {
            v.per_objective[fn_idx]
        } else {
            v.per_constraint[fn_idx - ctx.n_objectives]
        }
    };
    let mut choices = Vec::with_capacity(ctx.n_functions());
    for fn_idx in 0..ctx.n_functions() {
        let mut best = 0;
        for i in 1..values.len() {
            if part(&values[i], fn_idx) > part(&values[best], fn_idx) {
                best = i;
            }
        }
        choices.push(DecoupledChoice {
            fn_index: fn_idx,
            point: pool[best].clone(),
            value: part(&values[best], fn_idx),
        });
    }
    Ok(choices)
}

fn evaluate_pool<S: SampleScalar>(
    ctx: &AcquisitionContext<S>,
    points: &[Vec<S>],
) -> Result<Vec<AcquisitionValue<S>>> {
    points.par_iter().map(|x| evaluate_acquisition(ctx, x)).collect()
}

/// Acquisition values on a `resolution x resolution` lattice over a 2-D
/// domain, as CSV rows `x1,x2,alpha` (with header).
pub fn acquisition_surface<S: SampleScalar>(
    ctx: &AcquisitionContext<S>,
    resolution: usize,
) -> Result<String> {
    if ctx.domain.dim() != 2 {
        return Err(Error::Config(format!(
            "acquisition surface needs a 2-D domain, got {}-D",
            ctx.domain.dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::Config("surface resolution must be at least 2".into()));
    }
    let axis = |d: usize, i: usize| {
        ctx.domain.lower[d]
            + (ctx.domain.upper[d] - ctx.domain.lower[d])
                * S::c(i as f64 / (resolution - 1) as f64)
    };
    let mut grid = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            grid.push(vec![axis(0, i), axis(1, j)]);
        }
    }
    let values = evaluate_pool(ctx, &grid)?;
    let mut csv = String::from("x1,x2,alpha\n");
    for (p, v) in grid.iter().zip(&values) {
        csv.push_str(&format!("{},{},{}\n", p[0], p[1], v.total));
    }
    Ok(csv)
}
