//! Expectation propagation over the joint GP posterior at a fixed point set.
//!
//! The conditional predictive distribution "given that X* is the feasible
//! Pareto set" is intractable; it is approximated by attaching Gaussian sites
//! to two families of hard factors over the latent function values:
//!
//! * `phi` factors, one per (constraint j, Pareto point x*): the step
//!   Θ(c_j(x*)) stating every Pareto point is feasible.
//! * `omega` factors, one per (point x', Pareto point x*): the step
//!   1 − ∏_j Θ(c_j(x')) · ∏_k Θ(f_k(x*) − f_k(x')) stating no point may be
//!   feasible while weakly dominating a Pareto point (objectives are
//!   minimized).
//!
//! Sites on the fixed points (observations ∪ Pareto sample) are refined to
//! convergence once per Pareto sample; each candidate x is then conditioned
//! with a single non-iterated pass over its own `omega` factors, which leaves
//! the shared state untouched so one converged state serves a whole candidate
//! pool.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{noise_floor, GpPosterior};
use crate::linalg::{dot, Matrix};
use crate::normal::{hazard, log_cdf};
use crate::pareto::ParetoSample;
use crate::problem::Dataset;
use crate::scalar::Scalar;

/// L-infinity tolerance under which two inputs are treated as the same point.
pub const MERGE_TOL: f64 = 1e-10;
/// Cavity precisions at or below this are invalid; the factor is skipped for the pass.
const MIN_CAVITY_PRECISION: f64 = 1e-12;
/// Rank-1 update denominators at or below this would break positive
/// definiteness; the update is rejected and the old site kept.
const MIN_UPDATE_DENOM: f64 = 1e-10;
/// Partition values below this mark a hard-infeasible factor; its update is
/// skipped for the pass.
const MIN_PARTITION: f64 = 1e-300;
/// Variances below this are treated as exactly zero (hard step fallback).
const DEGENERATE_VAR: f64 = 1e-14;
/// Site deltas smaller than `tol` times this skip their O(q^2) joint update;
/// the discarded mass is orders of magnitude below the convergence tolerance.
const SKIP_FRACTION: f64 = 1e-3;

/// Settings for the EP fixed-point iteration.
#[derive(Debug, Clone)]
pub struct EpOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    pub damping: f64,
    /// Emit one JSON line of site/convergence diagnostics per converge call.
    pub debug: bool,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions { max_sweeps: 200, tol: 1e-4, damping: 0.5, debug: false }
    }
}

impl EpOptions {
    /// Default options, with diagnostics enabled when `PESMOC_DEBUG_EP=1`.
    pub fn from_env() -> Self {
        let debug = std::env::var("PESMOC_DEBUG_EP").map(|v| v == "1").unwrap_or(false);
        EpOptions { debug, ..EpOptions::default() }
    }
}

/// Per-function joint Gaussian over the fixed points, plus what is needed to
/// extend it to new candidate points.
#[derive(Debug, Clone)]
struct GraphPrior<S> {
    mean: Vec<S>,
    cov: Matrix<S>,
    /// Cholesky factor of `cov`, for conditioning candidates on the joint.
    chol: crate::linalg::Cholesky<S>,
    /// Per fixed point: solved cross-covariance against the GP training set.
    gammas: Vec<Vec<S>>,
}

/// Joint GP posterior over the union of observed inputs, the Pareto sample,
/// and (optionally) one candidate, with factor bookkeeping.
#[derive(Debug, Clone)]
pub struct FactorGraph<S: Scalar> {
    points: Vec<Vec<S>>,
    /// Coordinate of each Pareto point inside `points` (deduplicated).
    star_pos: Vec<usize>,
    /// Coordinate of the candidate passed to `build_factor_graph`, if any.
    /// May coincide with a data or Pareto coordinate after merging.
    candidate_pos: Option<usize>,
    /// True when the candidate coordinate exists only because of the
    /// candidate (it merged with no data or Pareto point).
    candidate_fresh: bool,
    n_objectives: usize,
    gps: Vec<GpPosterior<S>>,
    priors: Vec<GraphPrior<S>>,
}

impl<S: Scalar> FactorGraph<S> {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_stars(&self) -> usize {
        self.star_pos.len()
    }

    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    pub fn n_constraints(&self) -> usize {
        self.gps.len() - self.n_objectives
    }

    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }

    pub fn star_positions(&self) -> &[usize] {
        &self.star_pos
    }

    pub fn candidate_position(&self) -> Option<usize> {
        self.candidate_pos
    }

    pub fn gps(&self) -> &[GpPosterior<S>] {
        &self.gps
    }

    /// Prior (pre-EP) joint mean and covariance for one function.
    pub fn prior_joint(&self, fn_idx: usize) -> (&[S], &Matrix<S>) {
        (&self.priors[fn_idx].mean, &self.priors[fn_idx].cov)
    }

    fn find_point(&self, x: &[S]) -> Option<usize> {
        let tol = S::c(MERGE_TOL);
        self.points.iter().position(|p| {
            p.len() == x.len() && p.iter().zip(x).all(|(&a, &b)| (a - b).abs() <= tol)
        })
    }
}

/// Gaussian site in natural parameters: precision `tau`, mean-times-precision `nu`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhiSite<S> {
    pub tau: S,
    pub nu: S,
}

/// Site for one `omega` factor: per objective a rank-1 precision in the
/// difference direction f_k(x*) − f_k(x'), per constraint a scalar site on
/// c_j(x').
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSite<S> {
    pub obj_tau: Vec<S>,
    pub obj_nu: Vec<S>,
    pub con_tau: Vec<S>,
    pub con_nu: Vec<S>,
}

impl<S: Scalar> OmegaSite<S> {
    fn zeros(k: usize, c: usize) -> Self {
        OmegaSite {
            obj_tau: vec![S::zero(); k],
            obj_nu: vec![S::zero(); k],
            con_tau: vec![S::zero(); c],
            con_nu: vec![S::zero(); c],
        }
    }

    /// The 2x2 natural precision of objective part `k` over (f_k(x'), f_k(x*)).
    pub fn v_tilde(&self, k: usize) -> [[S; 2]; 2] {
        let t = self.obj_tau[k];
        [[t, -t], [-t, t]]
    }

    /// The 2-vector natural mean of objective part `k` over (f_k(x'), f_k(x*)).
    pub fn m_tilde(&self, k: usize) -> [S; 2] {
        let n = self.obj_nu[k];
        [-n, n]
    }
}

/// Converged (or flagged) EP approximation over the fixed points.
///
/// Read-only from the perspective of candidate conditioning: one state is
/// shared across every candidate evaluated against the same Pareto sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EpState<S: Scalar> {
    means: Vec<Vec<S>>,
    covs: Vec<Matrix<S>>,
    phi_sites: Vec<PhiSite<S>>,
    omega_sites: Vec<OmegaSite<S>>,
    /// (point coordinate x', star index) per omega site.
    omega_pairs: Vec<(usize, usize)>,
    /// Per function: prior_cov^{-1} (mean − prior_mean), for extending the
    /// conditioned joint to candidate points.
    solve_t: Vec<Vec<S>>,
    converged: bool,
    sweeps: usize,
    max_delta: S,
}

impl<S: Scalar> EpState<S> {
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn max_delta(&self) -> S {
        self.max_delta
    }

    pub fn phi_sites(&self) -> &[PhiSite<S>] {
        &self.phi_sites
    }

    pub fn omega_sites(&self) -> &[OmegaSite<S>] {
        &self.omega_sites
    }

    pub fn omega_pairs(&self) -> &[(usize, usize)] {
        &self.omega_pairs
    }

    /// Conditioned latent marginal (mean, variance) of function `fn_idx` at
    /// fixed point `point_idx`.
    pub fn marginal(&self, fn_idx: usize, point_idx: usize) -> (S, S) {
        (self.means[fn_idx][point_idx], self.covs[fn_idx][(point_idx, point_idx)])
    }

    /// Conditioned joint over the fixed points for one function.
    pub fn joint(&self, fn_idx: usize) -> (&[S], &Matrix<S>) {
        (&self.means[fn_idx], &self.covs[fn_idx])
    }
}

/// Conditioned predictive marginals at a candidate, observation noise included.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedPrediction<S> {
    pub obj_mean: Vec<S>,
    pub obj_var: Vec<S>,
    pub con_mean: Vec<S>,
    pub con_var: Vec<S>,
}

/// Assemble per-function joint Gaussians over observed inputs ∪ Pareto sample
/// ∪ optional candidate, deduplicating coincident points (tolerance
/// [`MERGE_TOL`], L-infinity).
///
/// `gps` holds the objective posteriors first, then the constraints; counts
/// must match the Pareto sample and dataset widths.
pub fn build_factor_graph<S: Scalar>(
    gps: &[GpPosterior<S>],
    n_objectives: usize,
    pareto: &ParetoSample<S>,
    data: &Dataset<S>,
    candidate: Option<&[S]>,
) -> Result<FactorGraph<S>> {
    if n_objectives == 0 || n_objectives > gps.len() {
        return Err(Error::InvalidArgument(format!(
            "objective count {n_objectives} incompatible with {} models",
            gps.len()
        )));
    }
    let n_constraints = gps.len() - n_objectives;
    if !pareto.is_empty() {
        if pareto.f_values[0].len() != n_objectives {
            return Err(Error::DimensionMismatch {
                expected: n_objectives,
                got: pareto.f_values[0].len(),
            });
        }
        if pareto.c_values[0].len() != n_constraints {
            return Err(Error::DimensionMismatch {
                expected: n_constraints,
                got: pareto.c_values[0].len(),
            });
        }
    }
    if let Some(obs) = data.observations.first() {
        if obs.y.len() != gps.len() {
            return Err(Error::DimensionMismatch { expected: gps.len(), got: obs.y.len() });
        }
    }

    let tol = S::c(MERGE_TOL);
    let close = |p: &[S], x: &[S]| {
        p.len() == x.len() && p.iter().zip(x).all(|(&a, &b)| (a - b).abs() <= tol)
    };
    let mut points: Vec<Vec<S>> = Vec::new();
    let push_dedup = |points: &mut Vec<Vec<S>>, x: &[S]| -> usize {
        if let Some(i) = points.iter().position(|p| close(p, x)) {
            i
        } else {
            points.push(x.to_vec());
            points.len() - 1
        }
    };
    for obs in &data.observations {
        push_dedup(&mut points, &obs.x);
    }
    let mut star_pos = Vec::with_capacity(pareto.len());
    for p in &pareto.points {
        let i = push_dedup(&mut points, p);
        if !star_pos.contains(&i) {
            star_pos.push(i);
        }
    }
    let before_candidate = points.len();
    let candidate_pos = candidate.map(|x| push_dedup(&mut points, x));
    let candidate_fresh = points.len() > before_candidate;

    let mut priors = Vec::with_capacity(gps.len());
    for gp in gps {
        let joint = gp.joint(&points);
        let chol = crate::linalg::cholesky_jittered(&joint.cov)?;
        priors.push(GraphPrior { mean: joint.mean, cov: joint.cov, chol, gammas: joint.gammas });
    }

    Ok(FactorGraph {
        points,
        star_pos,
        candidate_pos,
        candidate_fresh,
        n_objectives,
        gps: gps.to_vec(),
        priors,
    })
}

/// Partition function of a `phi` factor Θ(c) against a scalar Gaussian cavity:
/// Z = Φ(mean/√var).
pub fn phi_partition<S: Scalar>(cavity_mean: S, cavity_var: S) -> Result<S> {
    if !(cavity_var > S::zero()) || !cavity_var.is_finite() {
        return Err(Error::Numerical(format!(
            "phi cavity variance must be positive, got {cavity_var}"
        )));
    }
    Ok(crate::normal::cdf(cavity_mean / cavity_var.sqrt()))
}

/// Tilted moments of Θ(c) against a scalar Gaussian cavity (mean, var):
/// the mean and variance of the lower-truncated Gaussian.
pub fn phi_tilted_moments<S: Scalar>(cavity_mean: S, cavity_var: S) -> (S, S) {
    let s = cavity_var.sqrt();
    let alpha = cavity_mean / s;
    let u = hazard(alpha);
    let m_hat = cavity_mean + s * u;
    let v_hat = cavity_var * (S::one() - u * (alpha + u));
    (m_hat, v_hat)
}

/// One scalar cavity entering an `omega` factor. Objective cavities live in
/// the difference variable d_k = f_k(x*) − f_k(x'); a (near-)zero variance
/// falls back to hard step evaluation.
#[derive(Debug, Clone, Copy)]
pub enum OmegaCavity<S> {
    Gaussian { mean: S, var: S },
    Degenerate { mean: S },
}

impl<S: Scalar> OmegaCavity<S> {
    pub fn new(mean: S, var: S) -> Self {
        if var > S::c(DEGENERATE_VAR) {
            OmegaCavity::Gaussian { mean, var }
        } else {
            OmegaCavity::Degenerate { mean }
        }
    }

    /// log Φ(mean/√var), with the hard-step limit for degenerate cavities.
    fn log_cdf_term(&self) -> S {
        match *self {
            OmegaCavity::Gaussian { mean, var } => log_cdf(mean / var.sqrt()),
            OmegaCavity::Degenerate { mean } => {
                if mean >= S::zero() {
                    S::zero()
                } else {
                    S::neg_infinity()
                }
            }
        }
    }
}

/// Moment-matching analysis of one `omega` factor
/// 1 − ∏_j Θ(c_j) · ∏_k Θ(d_k) against factorized Gaussian cavities.
#[derive(Debug, Clone)]
pub struct OmegaAnalysis<S> {
    /// Partition value Z = 1 − ∏ Φ(α_j) ∏ Φ(γ_k), in [0, 1].
    pub z: S,
    /// Tilted (mean, var) per constraint part; `None` when the part is
    /// degenerate or the factor is hard-infeasible (Z below threshold).
    pub con: Vec<Option<(S, S)>>,
    /// Tilted (mean, var) per objective difference part.
    pub obj: Vec<Option<(S, S)>>,
}

/// Bivariate Gaussian cavity over (f_k(x'), f_k(x*)) for one objective.
#[derive(Debug, Clone, Copy)]
pub struct BivariateCavity<S> {
    pub mean: [S; 2],
    pub cov: [[S; 2]; 2],
}

impl<S: Scalar> BivariateCavity<S> {
    /// Marginal (mean, var) of the difference d = f(x*) − f(x').
    pub fn difference(&self) -> (S, S) {
        let m = self.mean[1] - self.mean[0];
        let two = S::c(2.0);
        let v = self.cov[0][0] + self.cov[1][1] - two * self.cov[0][1];
        (m, v)
    }
}

/// Partition function of an `omega` factor against its cavity set:
/// Z = 1 − ∏_j Φ(α_j) · ∏_k Φ(γ_k), where α_j normalizes the constraint
/// cavity mean and γ_k the mean of f_k(x*) − f_k(x') under the bivariate
/// cavity. A zero-variance difference falls back to hard step evaluation.
pub fn omega_partition<S: Scalar>(
    c_cavities: &[(S, S)],
    f_cavities: &[BivariateCavity<S>],
) -> Result<S> {
    let mut con = Vec::with_capacity(c_cavities.len());
    for &(mean, var) in c_cavities {
        if !(var > S::zero()) || !var.is_finite() {
            return Err(Error::Numerical(format!(
                "omega constraint cavity variance must be positive, got {var}"
            )));
        }
        con.push(OmegaCavity::Gaussian { mean, var });
    }
    let mut obj = Vec::with_capacity(f_cavities.len());
    for cav in f_cavities {
        for d in 0..2 {
            let v = cav.cov[d][d];
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "omega bivariate cavity variance must be positive, got {v}"
                )));
            }
        }
        let (m_d, v_d) = cav.difference();
        if v_d < S::zero() || !v_d.is_finite() {
            return Err(Error::Numerical(format!(
                "omega bivariate cavity has invalid difference variance {v_d}"
            )));
        }
        obj.push(OmegaCavity::new(m_d, v_d));
    }
    Ok(omega_partition_diff(&con, &obj))
}

/// Partition function in difference space: cavities already reduced to the
/// scalar variables the factor touches (constraints at x', objective
/// differences d_k).
pub fn omega_partition_diff<S: Scalar>(
    c_cavities: &[OmegaCavity<S>],
    f_cavities: &[OmegaCavity<S>],
) -> S {
    let log_f: S = c_cavities
        .iter()
        .chain(f_cavities)
        .map(OmegaCavity::log_cdf_term)
        .fold(S::zero(), |a, b| a + b);
    -log_f.exp_m1()
}

/// Full moment-matching analysis of an `omega` factor: partition value and
/// per-part tilted moments (derivatives of log Z with respect to each cavity
/// mean).
pub fn omega_analyze<S: Scalar>(
    c_cavities: &[OmegaCavity<S>],
    f_cavities: &[OmegaCavity<S>],
) -> OmegaAnalysis<S> {
    let log_f: S = c_cavities
        .iter()
        .chain(f_cavities)
        .map(OmegaCavity::log_cdf_term)
        .fold(S::zero(), |a, b| a + b);
    let z = -log_f.exp_m1();
    let f = log_f.exp();

    let hard_infeasible = !(z.f64() >= MIN_PARTITION);
    let part = |cav: &OmegaCavity<S>| -> Option<(S, S)> {
        if hard_infeasible {
            return None;
        }
        let (mean, var) = match *cav {
            OmegaCavity::Gaussian { mean, var } => (mean, var),
            OmegaCavity::Degenerate { .. } => return None,
        };
        let s = var.sqrt();
        let alpha = mean / s;
        let u = hazard(alpha);
        // d logZ/dm = −F·u/(s·Z); d²logZ/dm² = F·u·(α·Z − F·u)/(v·Z²).
        let g = -(f * u) / (s * z);
        let h = (f * u) * (alpha * z - f * u) / (var * z * z);
        let m_hat = mean + var * g;
        let v_hat = var + var * var * h;
        if m_hat.is_finite() && v_hat.is_finite() && v_hat > S::zero() {
            Some((m_hat, v_hat))
        } else {
            None
        }
    };
    OmegaAnalysis {
        z,
        con: c_cavities.iter().map(part).collect(),
        obj: f_cavities.iter().map(part).collect(),
    }
}

/// Scalar cavity from a marginal (mean, var) and a site (tau, nu).
/// Returns None when the cavity precision is not usably positive.
fn scalar_cavity<S: Scalar>(mean: S, var: S, tau: S, nu: S) -> Option<(S, S)> {
    if !(var > S::zero()) {
        return None;
    }
    let tau_cav = S::one() / var - tau;
    if !(tau_cav > S::c(MIN_CAVITY_PRECISION)) || !tau_cav.is_finite() {
        return None;
    }
    let v_cav = S::one() / tau_cav;
    let m_cav = (mean / var - nu) * v_cav;
    if m_cav.is_finite() {
        Some((m_cav, v_cav))
    } else {
        None
    }
}

/// New site naturals that make the cavity-site product match the tilted
/// moments.
fn site_from_tilted<S: Scalar>(m_hat: S, v_hat: S, m_cav: S, v_cav: S) -> Option<(S, S)> {
    if !(v_hat > S::zero()) {
        return None;
    }
    let tau = S::one() / v_hat - S::one() / v_cav;
    let nu = m_hat / v_hat - m_cav / v_cav;
    if tau.is_finite() && nu.is_finite() {
        Some((tau, nu))
    } else {
        None
    }
}

/// Apply a rank-1 natural-parameter delta along direction `u` to (mean, cov),
/// where `w = cov·u`, `v_dir = uᵀcov u`, `u_mean = uᵀmean`. Returns false
/// (no-op) when the update would destroy positive definiteness.
fn apply_rank1<S: Scalar>(
    cov: &mut Matrix<S>,
    mean: &mut [S],
    w: &[S],
    v_dir: S,
    u_mean: S,
    d_tau: S,
    d_nu: S,
) -> bool {
    let denom = S::one() + d_tau * v_dir;
    if !(denom > S::c(MIN_UPDATE_DENOM)) || !denom.is_finite() {
        return false;
    }
    let coef_s = d_tau / denom;
    let coef_m = (d_nu - d_tau * u_mean) / denom;
    if !coef_s.is_finite() || !coef_m.is_finite() {
        return false;
    }
    let q = mean.len();
    for r in 0..q {
        let wr = w[r];
        mean[r] = mean[r] + coef_m * wr;
        let cs = coef_s * wr;
        let row = cov.row_mut(r);
        for (rc, &wc) in row.iter_mut().zip(w) {
            *rc = *rc - cs * wc;
        }
    }
    true
}

/// Copy column `i` of a symmetric matrix into `w`.
fn coord_direction<S: Scalar>(cov: &Matrix<S>, i: usize, w: &mut Vec<S>) {
    w.clear();
    w.extend_from_slice(cov.row(i));
}

/// Copy cov·(e_a − e_b) into `w` for a symmetric matrix.
fn diff_direction<S: Scalar>(cov: &Matrix<S>, a: usize, b: usize, w: &mut Vec<S>) {
    w.clear();
    let ra = cov.row(a);
    let rb = cov.row(b);
    w.extend(ra.iter().zip(rb).map(|(&x, &y)| x - y));
}

/// Per-sweep diagnostic counters.
#[derive(Debug, Clone, Copy, Default, Serialize)]
struct SweepStats {
    invalid_cavity: usize,
    hard_infeasible: usize,
    rejected_pd: usize,
}

struct Sweeper<'a, S: Scalar> {
    graph: &'a FactorGraph<S>,
    damping: S,
    skip_tol: S,
    max_delta: S,
    stats: SweepStats,
    w: Vec<S>,
}

impl<'a, S: Scalar> Sweeper<'a, S> {
    /// Damp a proposed site, then commit it and update the joint unless the
    /// PD guard rejects it. Tiny deltas are committed without the O(q^2)
    /// joint update.
    #[allow(clippy::too_many_arguments)]
    fn commit_scalar_part(
        &mut self,
        cov: &mut Matrix<S>,
        mean: &mut Vec<S>,
        coord: usize,
        site_tau: &mut S,
        site_nu: &mut S,
        new_tau: S,
        new_nu: S,
    ) {
        let d_tau = self.damping * (new_tau - *site_tau);
        let d_nu = self.damping * (new_nu - *site_nu);
        let delta = d_tau.abs().max(d_nu.abs());
        if delta <= self.skip_tol {
            return;
        }
        coord_direction(cov, coord, &mut self.w);
        let v_dir = cov[(coord, coord)];
        let u_mean = mean[coord];
        if apply_rank1(cov, mean, &self.w, v_dir, u_mean, d_tau, d_nu) {
            *site_tau = *site_tau + d_tau;
            *site_nu = *site_nu + d_nu;
            self.max_delta = self.max_delta.max(delta);
        } else {
            self.stats.rejected_pd += 1;
        }
    }

    /// Same, for an objective difference direction e_star − e_point.
    #[allow(clippy::too_many_arguments)]
    fn commit_diff_part(
        &mut self,
        cov: &mut Matrix<S>,
        mean: &mut Vec<S>,
        star: usize,
        point: usize,
        site_tau: &mut S,
        site_nu: &mut S,
        new_tau: S,
        new_nu: S,
    ) {
        let d_tau = self.damping * (new_tau - *site_tau);
        let d_nu = self.damping * (new_nu - *site_nu);
        let delta = d_tau.abs().max(d_nu.abs());
        if delta <= self.skip_tol {
            return;
        }
        diff_direction(cov, star, point, &mut self.w);
        let v_dir = cov[(star, star)] + cov[(point, point)]
            - (cov[(star, point)] + cov[(star, point)]);
        let u_mean = mean[star] - mean[point];
        if apply_rank1(cov, mean, &self.w, v_dir, u_mean, d_tau, d_nu) {
            *site_tau = *site_tau + d_tau;
            *site_nu = *site_nu + d_nu;
            self.max_delta = self.max_delta.max(delta);
        } else {
            self.stats.rejected_pd += 1;
        }
    }

    /// One EP refinement of the `phi` factor (constraint j, star s).
    fn refresh_phi(&mut self, state: &mut EpStateParts<S>, j: usize, s: usize) {
        let coord = self.graph.star_pos[s];
        let fn_idx = self.graph.n_objectives + j;
        let site = &mut state.phi_sites[j * self.graph.star_pos.len() + s];
        let (mean, var) = (state.means[fn_idx][coord], state.covs[fn_idx][(coord, coord)]);
        let Some((m_cav, v_cav)) = scalar_cavity(mean, var, site.tau, site.nu) else {
            self.stats.invalid_cavity += 1;
            return;
        };
        let (m_hat, v_hat) = phi_tilted_moments(m_cav, v_cav);
        let Some((new_tau, new_nu)) = site_from_tilted(m_hat, v_hat, m_cav, v_cav) else {
            self.stats.invalid_cavity += 1;
            return;
        };
        self.commit_scalar_part(
            &mut state.covs[fn_idx],
            &mut state.means[fn_idx],
            coord,
            &mut site.tau,
            &mut site.nu,
            new_tau,
            new_nu,
        );
    }

    /// One EP refinement of the `omega` factor for (point x', star s): all
    /// cavities are formed first, one partition value is shared, and each
    /// function's joint is updated independently.
    fn refresh_omega(&mut self, state: &mut EpStateParts<S>, site_idx: usize) {
        let (point, s) = state.omega_pairs[site_idx];
        let star = self.graph.star_pos[s];
        let k_obj = self.graph.n_objectives;
        let n_con = self.graph.n_constraints();
        let site = &mut state.omega_sites[site_idx];

        let mut con_cav = Vec::with_capacity(n_con);
        for j in 0..n_con {
            let fn_idx = k_obj + j;
            let (mean, var) =
                (state.means[fn_idx][point], state.covs[fn_idx][(point, point)]);
            match scalar_cavity(mean, var, site.con_tau[j], site.con_nu[j]) {
                Some((m, v)) => con_cav.push(OmegaCavity::new(m, v)),
                None => {
                    self.stats.invalid_cavity += 1;
                    return;
                }
            }
        }
        let mut obj_cav = Vec::with_capacity(k_obj);
        for k in 0..k_obj {
            let cov = &state.covs[k];
            let v_d = cov[(star, star)] + cov[(point, point)]
                - (cov[(star, point)] + cov[(star, point)]);
            let m_d = state.means[k][star] - state.means[k][point];
            if v_d <= S::c(DEGENERATE_VAR) {
                obj_cav.push(OmegaCavity::Degenerate { mean: m_d });
                continue;
            }
            match scalar_cavity(m_d, v_d, site.obj_tau[k], site.obj_nu[k]) {
                Some((m, v)) => obj_cav.push(OmegaCavity::new(m, v)),
                None => {
                    self.stats.invalid_cavity += 1;
                    return;
                }
            }
        }

        let analysis = omega_analyze(&con_cav, &obj_cav);
        if !(analysis.z.f64() >= MIN_PARTITION) {
            self.stats.hard_infeasible += 1;
            return;
        }

        for j in 0..n_con {
            let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                (analysis.con[j], con_cav[j])
            else {
                continue;
            };
            let Some((new_tau, new_nu)) = site_from_tilted(m_hat, v_hat, mean, var) else {
                continue;
            };
            let fn_idx = k_obj + j;
            self.commit_scalar_part(
                &mut state.covs[fn_idx],
                &mut state.means[fn_idx],
                point,
                &mut site.con_tau[j],
                &mut site.con_nu[j],
                new_tau,
                new_nu,
            );
        }
        for k in 0..k_obj {
            let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                (analysis.obj[k], obj_cav[k])
            else {
                continue;
            };
            let Some((new_tau, new_nu)) = site_from_tilted(m_hat, v_hat, mean, var) else {
                continue;
            };
            self.commit_diff_part(
                &mut state.covs[k],
                &mut state.means[k],
                star,
                point,
                &mut site.obj_tau[k],
                &mut site.obj_nu[k],
                new_tau,
                new_nu,
            );
        }
    }
}

/// Mutable pieces of the state during sweeping (borrow-split from EpState).
struct EpStateParts<S: Scalar> {
    means: Vec<Vec<S>>,
    covs: Vec<Matrix<S>>,
    phi_sites: Vec<PhiSite<S>>,
    omega_sites: Vec<OmegaSite<S>>,
    omega_pairs: Vec<(usize, usize)>,
}

/// Refine all fixed-point sites to convergence: sweep `phi` sites first
/// (constraint-major, star-minor), then `omega` sites ordered by (x', x*),
/// where x' ranges over the non-candidate points. Non-convergence within
/// `max_sweeps` is flagged on the returned state, never fatal.
pub fn ep_converge_fixed<S: Scalar>(graph: &FactorGraph<S>, opts: &EpOptions) -> EpState<S> {
    let n_stars = graph.star_pos.len();
    let n_con = graph.n_constraints();
    let k_obj = graph.n_objectives;

    let mut omega_pairs = Vec::new();
    for point in 0..graph.points.len() {
        // A fresh candidate coordinate carries no fixed factors; it is
        // conditioned later by `condition_candidate`.
        if graph.candidate_fresh && graph.candidate_pos == Some(point) {
            continue;
        }
        for s in 0..n_stars {
            if graph.star_pos[s] != point {
                omega_pairs.push((point, s));
            }
        }
    }

    let mut parts = EpStateParts {
        means: graph.priors.iter().map(|p| p.mean.clone()).collect(),
        covs: graph.priors.iter().map(|p| p.cov.clone()).collect(),
        phi_sites: vec![PhiSite::default(); n_con * n_stars],
        omega_sites: vec![OmegaSite::zeros(k_obj, n_con); omega_pairs.len()],
        omega_pairs,
    };

    let mut converged = n_stars == 0;
    let mut sweeps = 0;
    let mut max_delta = S::zero();
    let mut stats = SweepStats::default();
    if !converged {
        let mut sweeper = Sweeper {
            graph,
            damping: S::c(opts.damping),
            skip_tol: S::c(opts.tol * SKIP_FRACTION),
            max_delta: S::zero(),
            stats: SweepStats::default(),
            w: Vec::with_capacity(graph.points.len()),
        };
        for sweep in 1..=opts.max_sweeps {
            sweeper.max_delta = S::zero();
            sweeper.stats = SweepStats::default();
            for j in 0..n_con {
                for s in 0..n_stars {
                    sweeper.refresh_phi(&mut parts, j, s);
                }
            }
            for idx in 0..parts.omega_pairs.len() {
                sweeper.refresh_omega(&mut parts, idx);
            }
            sweeps = sweep;
            max_delta = sweeper.max_delta;
            stats = sweeper.stats;
            if max_delta.f64() < opts.tol {
                converged = true;
                break;
            }
        }
    }

    let solve_t = graph
        .priors
        .iter()
        .zip(&parts.means)
        .map(|(prior, mean)| {
            let resid: Vec<S> =
                mean.iter().zip(&prior.mean).map(|(&m, &m0)| m - m0).collect();
            prior.chol.solve(&resid)
        })
        .collect();

    let state = EpState {
        means: parts.means,
        covs: parts.covs,
        phi_sites: parts.phi_sites,
        omega_sites: parts.omega_sites,
        omega_pairs: parts.omega_pairs,
        solve_t,
        converged,
        sweeps,
        max_delta,
    };
    if opts.debug {
        emit_debug_line(graph, &state, &stats);
    }
    state
}

fn emit_debug_line<S: Scalar>(graph: &FactorGraph<S>, state: &EpState<S>, stats: &SweepStats) {
    #[derive(Serialize)]
    struct DebugLine<'a> {
        event: &'static str,
        n_points: usize,
        n_stars: usize,
        n_objectives: usize,
        n_constraints: usize,
        sweeps: usize,
        converged: bool,
        max_delta: f64,
        last_sweep: &'a SweepStats,
        phi_sites: Vec<[f64; 2]>,
        omega_tau_max: f64,
        omega_nu_max: f64,
    }
    let mut omega_tau_max = 0.0_f64;
    let mut omega_nu_max = 0.0_f64;
    for site in &state.omega_sites {
        for v in site.obj_tau.iter().chain(&site.con_tau) {
            omega_tau_max = omega_tau_max.max(v.f64().abs());
        }
        for v in site.obj_nu.iter().chain(&site.con_nu) {
            omega_nu_max = omega_nu_max.max(v.f64().abs());
        }
    }
    let line = DebugLine {
        event: "ep_fixed",
        n_points: graph.n_points(),
        n_stars: graph.n_stars(),
        n_objectives: graph.n_objectives(),
        n_constraints: graph.n_constraints(),
        sweeps: state.sweeps,
        converged: state.converged,
        max_delta: state.max_delta.f64(),
        last_sweep: stats,
        phi_sites: state.phi_sites.iter().map(|s| [s.tau.f64(), s.nu.f64()]).collect(),
        omega_tau_max,
        omega_nu_max,
    };
    match serde_json::to_string(&line) {
        Ok(s) => eprintln!("{s}"),
        Err(e) => eprintln!("{{\"event\":\"ep_fixed\",\"error\":\"{e}\"}}"),
    }
}

/// Condition one candidate on the converged state: extend each function's
/// joint to the candidate (or reuse its coordinate when it coincides with a
/// fixed point), run a single non-iterated EP pass over the candidate's
/// `omega` factors, and return the marginals with observation noise added.
///
/// The state is read-only; candidates may be conditioned in any order or in
/// parallel against the same state.
pub fn condition_candidate<S: Scalar>(
    state: &EpState<S>,
    graph: &FactorGraph<S>,
    x: &[S],
) -> Result<ConditionedPrediction<S>> {
    let k_obj = graph.n_objectives;
    let n_con = graph.n_constraints();
    let n_stars = graph.star_pos.len();

    // A candidate coinciding with a data or Pareto point already carries that
    // point's omega factors in the converged state; re-applying them would
    // double count, so read the marginals directly. Only a fresh candidate
    // coordinate (present in the graph purely as a candidate) still needs its
    // own conditioning pass.
    if let Some(i) = graph.find_point(x) {
        let fresh = graph.candidate_fresh && graph.candidate_pos == Some(i);
        if fresh && n_stars > 0 {
            return candidate_pass_at(state, graph, i);
        }
        return Ok(package_marginals(graph, |fn_idx| state.marginal(fn_idx, i)));
    }

    // Extend each function's conditioned joint to x via the prior conditional.
    let mut ext_mean = Vec::with_capacity(graph.gps.len());
    let mut ext_var = Vec::with_capacity(graph.gps.len());
    let mut ext_cross = Vec::with_capacity(graph.gps.len());
    for (fn_idx, gp) in graph.gps.iter().enumerate() {
        let prior = &graph.priors[fn_idx];
        let (m0x, v0x, gamma_x) = gp.predict_full(x);
        let q = graph.points.len();
        let mut k_c = Vec::with_capacity(q);
        for (p, gamma_p) in graph.points.iter().zip(&prior.gammas) {
            let prior_k = crate::gp::matern52(gp.hp(), p, x);
            let reduction =
                if gamma_x.is_empty() { S::zero() } else { dot(gamma_p, &gamma_x) };
            k_c.push(prior_k - reduction);
        }
        let w = prior.chol.solve(&k_c);
        let mean_x = m0x + dot(&k_c, &state.solve_t[fn_idx]);
        let cross = state.covs[fn_idx].mat_vec(&w);
        let var_x = (v0x - dot(&k_c, &w) + dot(&w, &cross)).max(S::c(1e-12));
        if !mean_x.is_finite() || !var_x.is_finite() {
            return Err(Error::Numerical(format!(
                "candidate extension produced non-finite moments at {x:?}"
            )));
        }
        ext_mean.push(mean_x);
        ext_var.push(var_x);
        ext_cross.push(cross);
    }

    // Objectives: sub-joint over the stars plus the candidate (candidate last).
    let t = n_stars + 1;
    let mut sub_means: Vec<Vec<S>> = Vec::with_capacity(k_obj);
    let mut sub_covs: Vec<Matrix<S>> = Vec::with_capacity(k_obj);
    for k in 0..k_obj {
        let (mean, cov) = state.joint(k);
        let mut sm = Vec::with_capacity(t);
        let mut sc = Matrix::zeros(t, t);
        for (a, &pa) in graph.star_pos.iter().enumerate() {
            sm.push(mean[pa]);
            for (b, &pb) in graph.star_pos.iter().enumerate() {
                sc[(a, b)] = cov[(pa, pb)];
            }
            sc[(a, t - 1)] = ext_cross[k][pa];
            sc[(t - 1, a)] = ext_cross[k][pa];
        }
        sm.push(ext_mean[k]);
        sc[(t - 1, t - 1)] = ext_var[k];
        sub_means.push(sm);
        sub_covs.push(sc);
    }
    let mut con_track: Vec<(S, S)> =
        (0..n_con).map(|j| (ext_mean[k_obj + j], ext_var[k_obj + j])).collect();

    candidate_adf(graph, &mut sub_means, &mut sub_covs, &mut con_track)?;

    Ok(package_marginals(graph, |fn_idx| {
        if fn_idx < k_obj {
            (sub_means[fn_idx][t - 1], sub_covs[fn_idx][(t - 1, t - 1)])
        } else {
            con_track[fn_idx - k_obj]
        }
    }))
}

/// ADF pass for a candidate that exists as an unconditioned coordinate in the
/// graph (built with `candidate: Some(x)` and not coincident with data/stars).
fn candidate_pass_at<S: Scalar>(
    state: &EpState<S>,
    graph: &FactorGraph<S>,
    cand: usize,
) -> Result<ConditionedPrediction<S>> {
    let k_obj = graph.n_objectives;
    let n_con = graph.n_constraints();
    let n_stars = graph.star_pos.len();
    let t = n_stars + 1;

    let mut sub_means: Vec<Vec<S>> = Vec::with_capacity(k_obj);
    let mut sub_covs: Vec<Matrix<S>> = Vec::with_capacity(k_obj);
    for k in 0..k_obj {
        let (mean, cov) = state.joint(k);
        let mut sm = Vec::with_capacity(t);
        let mut sc = Matrix::zeros(t, t);
        for (a, &pa) in graph.star_pos.iter().enumerate() {
            sm.push(mean[pa]);
            for (b, &pb) in graph.star_pos.iter().enumerate() {
                sc[(a, b)] = cov[(pa, pb)];
            }
            sc[(a, t - 1)] = cov[(pa, cand)];
            sc[(t - 1, a)] = cov[(pa, cand)];
        }
        sm.push(mean[cand]);
        sc[(t - 1, t - 1)] = cov[(cand, cand)];
        sub_means.push(sm);
        sub_covs.push(sc);
    }
    let mut con_track: Vec<(S, S)> =
        (0..n_con).map(|j| state.marginal(k_obj + j, cand)).collect();

    candidate_adf(graph, &mut sub_means, &mut sub_covs, &mut con_track)?;

    Ok(package_marginals(graph, |fn_idx| {
        if fn_idx < k_obj {
            (sub_means[fn_idx][t - 1], sub_covs[fn_idx][(t - 1, t - 1)])
        } else {
            con_track[fn_idx - k_obj]
        }
    }))
}

/// Single undamped pass over the omega factors (candidate, x*) for all stars,
/// on the candidate's objective sub-joints (candidate coordinate last) and
/// scalar constraint marginals.
fn candidate_adf<S: Scalar>(
    graph: &FactorGraph<S>,
    sub_means: &mut [Vec<S>],
    sub_covs: &mut [Matrix<S>],
    con_track: &mut [(S, S)],
) -> Result<()> {
    let k_obj = graph.n_objectives;
    let n_stars = graph.star_pos.len();
    let t = n_stars + 1;
    let cand = t - 1;
    let mut w: Vec<S> = Vec::with_capacity(t);

    for s in 0..n_stars {
        let mut con_cav = Vec::with_capacity(con_track.len());
        for &(m, v) in con_track.iter() {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::Numerical(
                    "non-positive constraint variance while conditioning candidate".into(),
                ));
            }
            con_cav.push(OmegaCavity::new(m, v));
        }
        let mut obj_cav = Vec::with_capacity(k_obj);
        for k in 0..k_obj {
            let cov = &sub_covs[k];
            let v_d =
                cov[(s, s)] + cov[(cand, cand)] - (cov[(s, cand)] + cov[(s, cand)]);
            let m_d = sub_means[k][s] - sub_means[k][cand];
            obj_cav.push(OmegaCavity::new(m_d, v_d.max(S::zero())));
        }

        let analysis = omega_analyze(&con_cav, &obj_cav);
        if !(analysis.z.f64() >= MIN_PARTITION) {
            continue;
        }
        for (j, part) in analysis.con.iter().enumerate() {
            let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { .. }) = (part, con_cav[j])
            else {
                continue;
            };
            if *v_hat > S::zero() {
                con_track[j] = (*m_hat, *v_hat);
            }
        }
        for (k, part) in analysis.obj.iter().enumerate() {
            let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                (part, obj_cav[k])
            else {
                continue;
            };
            let Some((d_tau, d_nu)) = site_from_tilted(*m_hat, *v_hat, mean, var) else {
                continue;
            };
            let cov = &mut sub_covs[k];
            diff_direction(cov, s, cand, &mut w);
            let v_dir = var;
            let u_mean = mean;
            apply_rank1(cov, &mut sub_means[k], &w, v_dir, u_mean, d_tau, d_nu);
        }
    }
    Ok(())
}

/// TEMPORARY DIAGNOSTIC — candidate conditioning variants for accuracy
/// comparison. mode: 0 sequential (production), 1 reversed star order,
/// 2 parallel one-pass, 3 iterated EP with per-factor sites to convergence.
#[doc(hidden)]
pub fn condition_candidate_variant<S: Scalar>(
    state: &EpState<S>,
    graph: &FactorGraph<S>,
    x: &[S],
    mode: u8,
) -> Result<ConditionedPrediction<S>> {
    let k_obj = graph.n_objectives;
    let n_con = graph.n_constraints();
    let n_stars = graph.star_pos.len();

    // Extension identical to condition_candidate.
    let mut ext_mean = Vec::with_capacity(graph.gps.len());
    let mut ext_var = Vec::with_capacity(graph.gps.len());
    let mut ext_cross = Vec::with_capacity(graph.gps.len());
    for (fn_idx, gp) in graph.gps.iter().enumerate() {
        let prior = &graph.priors[fn_idx];
        let (m0x, v0x, gamma_x) = gp.predict_full(x);
        let q = graph.points.len();
        let mut k_c = Vec::with_capacity(q);
        for (p, gamma_p) in graph.points.iter().zip(&prior.gammas) {
            let prior_k = crate::gp::matern52(gp.hp(), p, x);
            let reduction =
                if gamma_x.is_empty() { S::zero() } else { dot(gamma_p, &gamma_x) };
            k_c.push(prior_k - reduction);
        }
        let w = prior.chol.solve(&k_c);
        let mean_x = m0x + dot(&k_c, &state.solve_t[fn_idx]);
        let cross = state.covs[fn_idx].mat_vec(&w);
        let var_x = (v0x - dot(&k_c, &w) + dot(&w, &cross)).max(S::c(1e-12));
        ext_mean.push(mean_x);
        ext_var.push(var_x);
        ext_cross.push(cross);
    }
    let t = n_stars + 1;
    let cand = t - 1;
    let mut sub_means: Vec<Vec<S>> = Vec::with_capacity(k_obj);
    let mut sub_covs: Vec<Matrix<S>> = Vec::with_capacity(k_obj);
    for k in 0..k_obj {
        let (mean, cov) = state.joint(k);
        let mut sm = Vec::with_capacity(t);
        let mut sc = Matrix::zeros(t, t);
        for (a, &pa) in graph.star_pos.iter().enumerate() {
            sm.push(mean[pa]);
            for (b, &pb) in graph.star_pos.iter().enumerate() {
                sc[(a, b)] = cov[(pa, pb)];
            }
            sc[(a, t - 1)] = ext_cross[k][pa];
            sc[(t - 1, a)] = ext_cross[k][pa];
        }
        sm.push(ext_mean[k]);
        sc[(t - 1, t - 1)] = ext_var[k];
        sub_means.push(sm);
        sub_covs.push(sc);
    }
    let mut con_track: Vec<(S, S)> =
        (0..n_con).map(|j| (ext_mean[k_obj + j], ext_var[k_obj + j])).collect();

    let star_order: Vec<usize> = if mode == 1 {
        (0..n_stars).rev().collect()
    } else {
        (0..n_stars).collect()
    };

    let mut w: Vec<S> = Vec::with_capacity(t);
    match mode {
        0 | 1 => {
            for &s in &star_order {
                let mut con_cav = Vec::with_capacity(n_con);
                for &(m, v) in con_track.iter() {
                    con_cav.push(OmegaCavity::new(m, v));
                }
                let mut obj_cav = Vec::with_capacity(k_obj);
                for k in 0..k_obj {
                    let cov = &sub_covs[k];
                    let v_d = cov[(s, s)] + cov[(cand, cand)]
                        - (cov[(s, cand)] + cov[(s, cand)]);
                    let m_d = sub_means[k][s] - sub_means[k][cand];
                    obj_cav.push(OmegaCavity::new(m_d, v_d.max(S::zero())));
                }
                let analysis = omega_analyze(&con_cav, &obj_cav);
                if !(analysis.z.f64() >= MIN_PARTITION) {
                    continue;
                }
                for (j, part) in analysis.con.iter().enumerate() {
                    if let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { .. }) =
                        (part, con_cav[j])
                    {
                        if *v_hat > S::zero() {
                            con_track[j] = (*m_hat, *v_hat);
                        }
                    }
                }
                for (k, part) in analysis.obj.iter().enumerate() {
                    let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                        (part, obj_cav[k])
                    else {
                        continue;
                    };
                    let Some((d_tau, d_nu)) = site_from_tilted(*m_hat, *v_hat, mean, var)
                    else {
                        continue;
                    };
                    let cov = &mut sub_covs[k];
                    diff_direction(cov, s, cand, &mut w);
                    apply_rank1(cov, &mut sub_means[k], &w, var, mean, d_tau, d_nu);
                }
            }
        }
        2 => {
            // All analyses against the initial joint; apply afterwards.
            let mut con_deltas: Vec<Vec<(S, S)>> = Vec::new();
            let mut obj_deltas: Vec<Vec<Option<(S, S)>>> = Vec::new();
            for s in 0..n_stars {
                let mut con_cav = Vec::with_capacity(n_con);
                for &(m, v) in con_track.iter() {
                    con_cav.push(OmegaCavity::new(m, v));
                }
                let mut obj_cav = Vec::with_capacity(k_obj);
                for k in 0..k_obj {
                    let cov = &sub_covs[k];
                    let v_d = cov[(s, s)] + cov[(cand, cand)]
                        - (cov[(s, cand)] + cov[(s, cand)]);
                    let m_d = sub_means[k][s] - sub_means[k][cand];
                    obj_cav.push(OmegaCavity::new(m_d, v_d.max(S::zero())));
                }
                let analysis = omega_analyze(&con_cav, &obj_cav);
                if !(analysis.z.f64() >= MIN_PARTITION) {
                    con_deltas.push(vec![(S::zero(), S::zero()); n_con]);
                    obj_deltas.push(vec![None; k_obj]);
                    continue;
                }
                let mut cd = Vec::with_capacity(n_con);
                for (j, part) in analysis.con.iter().enumerate() {
                    if let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                        (part, con_cav[j])
                    {
                        if let Some(site) = site_from_tilted(*m_hat, *v_hat, mean, var) {
                            cd.push(site);
                            continue;
                        }
                    }
                    cd.push((S::zero(), S::zero()));
                }
                con_deltas.push(cd);
                let mut od = Vec::with_capacity(k_obj);
                for (k, part) in analysis.obj.iter().enumerate() {
                    if let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                        (part, obj_cav[k])
                    {
                        od.push(site_from_tilted(*m_hat, *v_hat, mean, var));
                    } else {
                        od.push(None);
                    }
                }
                obj_deltas.push(od);
            }
            // Apply constraint sites as precision-sum products.
            for j in 0..n_con {
                let (m0, v0) = con_track[j];
                let mut tau = S::one() / v0;
                let mut nu = m0 / v0;
                for s in 0..n_stars {
                    tau = tau + con_deltas[s][j].0;
                    nu = nu + con_deltas[s][j].1;
                }
                if tau > S::zero() {
                    con_track[j] = (nu / tau, S::one() / tau);
                }
            }
            for k in 0..k_obj {
                for s in 0..n_stars {
                    if let Some((d_tau, d_nu)) = obj_deltas[s][k] {
                        let cov = &mut sub_covs[k];
                        diff_direction(cov, s, cand, &mut w);
                        let v_d = cov[(s, s)] + cov[(cand, cand)]
                            - (cov[(s, cand)] + cov[(s, cand)]);
                        let m_d = sub_means[k][s] - sub_means[k][cand];
                        apply_rank1(cov, &mut sub_means[k], &w, v_d, m_d, d_tau, d_nu);
                    }
                }
            }
        }
        _ => {
            // Iterated EP with per-(star, part) sites.
            let mut con_sites = vec![vec![(S::zero(), S::zero()); n_con]; n_stars];
            let mut obj_sites = vec![vec![(S::zero(), S::zero()); k_obj]; n_stars];
            for _sweep in 0..200 {
                let mut max_delta = 0.0_f64;
                for s in 0..n_stars {
                    let mut con_cav = Vec::with_capacity(n_con);
                    for (j, &(m, v)) in con_track.iter().enumerate() {
                        let (tau, nu) = con_sites[s][j];
                        match scalar_cavity(m, v, tau, nu) {
                            Some((mc, vc)) => con_cav.push(OmegaCavity::new(mc, vc)),
                            None => con_cav.push(OmegaCavity::new(m, v)),
                        }
                    }
                    let mut obj_cav = Vec::with_capacity(k_obj);
                    let mut obj_cur = Vec::with_capacity(k_obj);
                    for k in 0..k_obj {
                        let cov = &sub_covs[k];
                        let v_d = (cov[(s, s)] + cov[(cand, cand)]
                            - (cov[(s, cand)] + cov[(s, cand)]))
                        .max(S::zero());
                        let m_d = sub_means[k][s] - sub_means[k][cand];
                        obj_cur.push((m_d, v_d));
                        let (tau, nu) = obj_sites[s][k];
                        match scalar_cavity(m_d, v_d, tau, nu) {
                            Some((mc, vc)) => obj_cav.push(OmegaCavity::new(mc, vc)),
                            None => obj_cav.push(OmegaCavity::new(m_d, v_d)),
                        }
                    }
                    let analysis = omega_analyze(&con_cav, &obj_cav);
                    if !(analysis.z.f64() >= MIN_PARTITION) {
                        continue;
                    }
                    for (j, part) in analysis.con.iter().enumerate() {
                        let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                            (part, con_cav[j])
                        else {
                            continue;
                        };
                        let Some((tau_n, nu_n)) =
                            site_from_tilted(*m_hat, *v_hat, mean, var)
                        else {
                            continue;
                        };
                        let (tau_o, nu_o) = con_sites[s][j];
                        max_delta = max_delta
                            .max((tau_n - tau_o).abs().f64())
                            .max((nu_n - nu_o).abs().f64());
                        if *v_hat > S::zero() {
                            con_sites[s][j] = (tau_n, nu_n);
                            con_track[j] = (*m_hat, *v_hat);
                        }
                    }
                    for (k, part) in analysis.obj.iter().enumerate() {
                        let (Some((m_hat, v_hat)), OmegaCavity::Gaussian { mean, var }) =
                            (part, obj_cav[k])
                        else {
                            continue;
                        };
                        let Some((tau_n, nu_n)) =
                            site_from_tilted(*m_hat, *v_hat, mean, var)
                        else {
                            continue;
                        };
                        let (tau_o, nu_o) = obj_sites[s][k];
                        let d_tau = tau_n - tau_o;
                        let d_nu = nu_n - nu_o;
                        max_delta = max_delta.max(d_tau.abs().f64()).max(d_nu.abs().f64());
                        let (m_d, v_d) = obj_cur[k];
                        let cov = &mut sub_covs[k];
                        diff_direction(cov, s, cand, &mut w);
                        if apply_rank1(cov, &mut sub_means[k], &w, v_d, m_d, d_tau, d_nu) {
                            obj_sites[s][k] = (tau_n, nu_n);
                        }
                    }
                }
                if max_delta < 1e-12 {
                    break;
                }
            }
        }
    }

    Ok(package_marginals(graph, |fn_idx| {
        if fn_idx < k_obj {
            (sub_means[fn_idx][cand], sub_covs[fn_idx][(cand, cand)])
        } else {
            con_track[fn_idx - k_obj]
        }
    }))
}

/// Assemble the prediction, adding observation noise per function.
fn package_marginals<S: Scalar>(
    graph: &FactorGraph<S>,
    marginal: impl Fn(usize) -> (S, S),
) -> ConditionedPrediction<S> {
    let k_obj = graph.n_objectives;
    let mut pred = ConditionedPrediction {
        obj_mean: Vec::with_capacity(k_obj),
        obj_var: Vec::with_capacity(k_obj),
        con_mean: Vec::with_capacity(graph.n_constraints()),
        con_var: Vec::with_capacity(graph.n_constraints()),
    };
    for (fn_idx, gp) in graph.gps.iter().enumerate() {
        let (m, v) = marginal(fn_idx);
        let v = v.max(S::zero()) + noise_floor(gp.noise_var());
        if fn_idx < k_obj {
            pred.obj_mean.push(m);
            pred.obj_var.push(v);
        } else {
            pred.con_mean.push(m);
            pred.con_var.push(v);
        }
    }
    pred
}
