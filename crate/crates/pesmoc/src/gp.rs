//! Gaussian process regression with a Matern 5/2 ARD kernel: exact
//! posteriors via Cholesky, marginal-likelihood hyperparameter inference by
//! slice sampling, and approximate function draws via random Fourier
//! features for Thompson-style sampling of whole functions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, dot, Cholesky, Matrix};
use crate::normal::log_pdf;
use crate::scalar::{SampleScalar, Scalar};

/// Kernel hyperparameters. `amplitude` is the kernel variance (not its
/// square root); `lengthscales` has one entry per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct HyperParams<S> {
    pub amplitude: S,
    pub lengthscales: Vec<S>,
    pub noise_var: S,
}

impl<S: Scalar> HyperParams<S> {
    pub fn isotropic(amplitude: S, lengthscale: S, dim: usize, noise_var: S) -> Self {
        HyperParams { amplitude, lengthscales: vec![lengthscale; dim], noise_var }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// Matern 5/2 with per-dimension lengthscales:
/// `k(x, x') = a (1 + sqrt(5) r + 5/3 r^2) exp(-sqrt(5) r)` where `r` is the
/// Euclidean distance of the lengthscale-scaled inputs.
pub fn matern52<S: Scalar>(hp: &HyperParams<S>, x: &[S], y: &[S]) -> S {
    debug_assert_eq!(x.len(), hp.lengthscales.len());
    debug_assert_eq!(y.len(), hp.lengthscales.len());
    let mut r2 = S::zero();
    for ((&xi, &yi), &l) in x.iter().zip(y).zip(&hp.lengthscales) {
        let d = (xi - yi) / l;
        r2 = r2 + d * d;
    }
    if r2 == S::zero() {
        return hp.amplitude;
    }
    let sqrt5_r = (S::c(5.0) * r2).sqrt();
    hp.amplitude * (S::one() + sqrt5_r + S::c(5.0 / 3.0) * r2) * (-sqrt5_r).exp()
}

/// Noise floor added to the kernel diagonal when fitting; keeps the Gram
/// matrix invertible for near-zero modeled noise. The same floor is used
/// wherever observation noise enters a predictive variance.
pub fn noise_floor<S: Scalar>(noise_var: S) -> S {
    noise_var.max(S::c(1e-8))
}

/// Joint posterior of the latent function at a set of points.
#[derive(Debug, Clone)]
pub struct JointPrediction<S> {
    pub mean: Vec<S>,
    pub cov: Matrix<S>,
    /// Per point `p_i`: the solved vector `L^-1 k(X_train, p_i)`. Needed by
    /// callers that later extend the joint with extra points.
    pub gammas: Vec<Vec<S>>,
}

/// Exact GP posterior for fixed hyperparameters and a training set.
#[derive(Debug, Clone)]
pub struct GpPosterior<S> {
    hp: HyperParams<S>,
    x_train: Vec<Vec<S>>,
    y_train: Vec<S>,
    chol: Cholesky<S>,
    /// `(K + noise I)^-1 y`.
    alpha: Vec<S>,
}

impl<S: Scalar> GpPosterior<S> {
    /// Fit the posterior: factor `K + max(noise_var, 1e-8) I`.
    pub fn fit(hp: HyperParams<S>, x_train: Vec<Vec<S>>, y_train: Vec<S>) -> Result<Self> {
        let n = x_train.len();
        if y_train.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y_train.len() });
        }
        for p in &x_train {
            if p.len() != hp.dim() {
                return Err(Error::DimensionMismatch { expected: hp.dim(), got: p.len() });
            }
        }
        let floor = noise_floor(hp.noise_var);
        let k = Matrix::from_symmetric(n, |i, j| {
            let v = matern52(&hp, &x_train[i], &x_train[j]);
            if i == j {
                v + floor
            } else {
                v
            }
        });
        let chol = cholesky_jittered(&k)?;
        let alpha = if n == 0 { Vec::new() } else { chol.solve(&y_train) };
        Ok(GpPosterior { hp, x_train, y_train, chol, alpha })
    }

    pub fn hp(&self) -> &HyperParams<S> {
        &self.hp
    }

    pub fn n_train(&self) -> usize {
        self.x_train.len()
    }

    pub fn noise_var(&self) -> S {
        self.hp.noise_var
    }

    pub fn kernel(&self, a: &[S], b: &[S]) -> S {
        matern52(&self.hp, a, b)
    }

    /// `L^-1 k(X_train, x)`; empty when there is no training data.
    pub fn gamma(&self, x: &[S]) -> Vec<S> {
        if self.x_train.is_empty() {
            return Vec::new();
        }
        let k_star: Vec<S> = self.x_train.iter().map(|t| matern52(&self.hp, t, x)).collect();
        self.chol.solve_lower(&k_star)
    }

    /// Posterior mean alone; skips the triangular solve `predict` needs for
    /// the variance, so dense-grid mean sweeps stay cheap.
    pub fn predict_mean(&self, x: &[S]) -> S {
        if self.x_train.is_empty() {
            return S::zero();
        }
        let k_star: Vec<S> = self.x_train.iter().map(|t| matern52(&self.hp, t, x)).collect();
        dot(&k_star, &self.alpha)
    }

    /// Posterior mean and latent variance (no observation noise) at `x`.
    pub fn predict(&self, x: &[S]) -> (S, S) {
        if self.x_train.is_empty() {
            return (S::zero(), self.hp.amplitude);
        }
        let k_star: Vec<S> = self.x_train.iter().map(|t| matern52(&self.hp, t, x)).collect();
        let mean = dot(&k_star, &self.alpha);
        let gamma = self.chol.solve_lower(&k_star);
        let var = (self.hp.amplitude - dot(&gamma, &gamma)).max(S::zero());
        (mean, var)
    }

    /// Like `predict`, but also returns the solved cross-covariance vector
    /// `L^{-1} k(X_train, x)` so callers can form posterior covariances
    /// between `x` and other points without re-solving.
    pub fn predict_full(&self, x: &[S]) -> (S, S, Vec<S>) {
        if self.x_train.is_empty() {
            return (S::zero(), self.hp.amplitude, Vec::new());
        }
        let k_star: Vec<S> = self.x_train.iter().map(|t| matern52(&self.hp, t, x)).collect();
        let mean = dot(&k_star, &self.alpha);
        let gamma = self.chol.solve_lower(&k_star);
        let var = (self.hp.amplitude - dot(&gamma, &gamma)).max(S::zero());
        (mean, var, gamma)
    }

    /// Joint posterior over the latent function at `points`, including the
    /// solved cross-covariance vectors so callers can extend the joint.
    pub fn joint(&self, points: &[Vec<S>]) -> JointPrediction<S> {
        let q = points.len();
        let gammas: Vec<Vec<S>> = points.iter().map(|p| self.gamma(p)).collect();
        let mean: Vec<S> = if self.x_train.is_empty() {
            vec![S::zero(); q]
        } else {
            points
                .iter()
                .map(|p| {
                    let k_star: Vec<S> =
                        self.x_train.iter().map(|t| matern52(&self.hp, t, p)).collect();
                    dot(&k_star, &self.alpha)
                })
                .collect()
        };
        let cov = Matrix::from_symmetric(q, |i, j| {
            let prior = matern52(&self.hp, &points[i], &points[j]);
            if self.x_train.is_empty() {
                prior
            } else {
                prior - dot(&gammas[i], &gammas[j])
            }
        });
        JointPrediction { mean, cov, gammas }
    }

    /// Log marginal likelihood of the training targets under `hp`.
    pub fn log_marginal_likelihood(&self) -> S {
        let n = self.x_train.len();
        if n == 0 {
            return S::zero();
        }
        let data_fit = dot(&self.y_train, &self.alpha);
        -S::c(0.5) * data_fit
            - S::c(0.5) * self.chol.log_det()
            - S::c(0.5 * n as f64) * S::c((2.0 * std::f64::consts::PI).ln())
    }
}

/// Log-normal prior on a positive hyperparameter, parameterized on the log
/// scale: `log v ~ Normal(mu, sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct LogNormalPrior<S> {
    pub mu: S,
    pub sigma: S,
}

impl<S: Scalar> LogNormalPrior<S> {
    pub fn from_median(median: S, sigma: S) -> Self {
        LogNormalPrior { mu: median.ln(), sigma }
    }

    /// Log density of the *log-scale* variable (a plain normal).
    pub fn log_density_of_log(&self, log_v: S) -> S {
        log_pdf((log_v - self.mu) / self.sigma) - self.sigma.ln()
    }
}

/// Priors over the full hyperparameter set of one GP.
#[derive(Debug, Clone)]
pub struct HyperPriors<S> {
    pub amplitude: LogNormalPrior<S>,
    pub lengthscales: Vec<LogNormalPrior<S>>,
    pub noise_var: LogNormalPrior<S>,
}

impl<S: Scalar> HyperPriors<S> {
    /// Weakly informative defaults scaled to the domain: lengthscale medians
    /// at a quarter of each axis width, unit amplitude median, and a broad
    /// noise prior centered at 1% variance.
    pub fn default_for_domain(widths: &[S]) -> Self {
        HyperPriors {
            amplitude: LogNormalPrior::from_median(S::one(), S::one()),
            lengthscales: widths
                .iter()
                .map(|&w| LogNormalPrior::from_median(w * S::c(0.25), S::one()))
                .collect(),
            noise_var: LogNormalPrior::from_median(S::c(0.01), S::c(3.0)),
        }
    }

    fn median_params(&self) -> HyperParams<S> {
        HyperParams {
            amplitude: self.amplitude.mu.exp(),
            lengthscales: self.lengthscales.iter().map(|p| p.mu.exp()).collect(),
            noise_var: self.noise_var.mu.exp(),
        }
    }
}

/// One slice-sampling update of a univariate coordinate (step-out then
/// shrinkage). Returns the new point; falls back to `x0` if the
/// log-density is degenerate at the current point.
pub fn slice_sample_step<S, F, R>(x0: S, log_f: &F, width: S, rng: &mut R) -> S
where
    S: SampleScalar,
    F: Fn(S) -> S,
    R: Rng + ?Sized,
{
    const MAX_STEP_OUT: usize = 20;
    const MAX_SHRINK: usize = 100;
    let f0 = log_f(x0);
    if !f0.is_finite() {
        return x0;
    }
    let level = f0 + S::unit_uniform(rng).max(S::c(1e-300)).ln();
    let u = S::unit_uniform(rng);
    let mut lo = x0 - width * u;
    let mut hi = lo + width;
    for _ in 0..MAX_STEP_OUT {
        if log_f(lo) <= level {
            break;
        }
        lo = lo - width;
    }
    for _ in 0..MAX_STEP_OUT {
        if log_f(hi) <= level {
            break;
        }
        hi = hi + width;
    }
    for _ in 0..MAX_SHRINK {
        let x1 = lo + S::unit_uniform(rng) * (hi - lo);
        if log_f(x1) > level {
            return x1;
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
    }
    x0
}

/// Draw hyperparameter samples from the posterior `lml + log prior` by
/// coordinate-wise slice sampling in log space. The chain starts at the
/// prior medians, burns in, then records every `thin`-th sweep.
pub fn slice_sample_hyperparams<S: SampleScalar>(
    x_train: &[Vec<S>],
    y_train: &[S],
    priors: &HyperPriors<S>,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<HyperParams<S>> {
    const BURN_SWEEPS: usize = 30;
    const THIN: usize = 2;
    let dim = priors.lengthscales.len();
    let n_params = dim + 2;

    // Parameter vector layout: [log amplitude, log lengthscales.., log noise].
    let unpack = |theta: &[S]| HyperParams {
        amplitude: theta[0].exp(),
        lengthscales: theta[1..1 + dim].iter().map(|v| v.exp()).collect(),
        noise_var: theta[1 + dim].exp(),
    };
    let prior_of = |i: usize| -> &LogNormalPrior<S> {
        if i == 0 {
            &priors.amplitude
        } else if i <= dim {
            &priors.lengthscales[i - 1]
        } else {
            &priors.noise_var
        }
    };
    let log_post = |theta: &[S]| -> S {
        let mut lp = S::zero();
        for i in 0..n_params {
            lp = lp + prior_of(i).log_density_of_log(theta[i]);
        }
        if x_train.is_empty() {
            return lp;
        }
        match GpPosterior::fit(unpack(theta), x_train.to_vec(), y_train.to_vec()) {
            Ok(gp) => lp + gp.log_marginal_likelihood(),
            Err(_) => S::neg_infinity(),
        }
    };

    let medians = priors.median_params();
    let mut theta: Vec<S> = Vec::with_capacity(n_params);
    theta.push(medians.amplitude.ln());
    theta.extend(medians.lengthscales.iter().map(|v| v.ln()));
    theta.push(medians.noise_var.ln());

    let width = S::one();
    let sweep = |theta: &mut Vec<S>, rng: &mut ChaCha8Rng| {
        for i in 0..n_params {
            let frozen = theta.clone();
            let log_f = |v: S| {
                let mut t = frozen.clone();
                t[i] = v;
                log_post(&t)
            };
            theta[i] = slice_sample_step(theta[i], &log_f, width, rng);
        }
    };

    for _ in 0..BURN_SWEEPS {
        sweep(&mut theta, rng);
    }
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..THIN {
            sweep(&mut theta, rng);
        }
        samples.push(unpack(&theta));
    }
    samples
}

/// A whole-function sample as a finite feature expansion:
/// `f(x) = sqrt(2 a / F) sum_f w_f cos(freq_f . x + phase_f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct FunctionSample<S> {
    freqs: Matrix<S>,
    phases: Vec<S>,
    weights: Vec<S>,
    scale: S,
}

impl<S: Scalar> FunctionSample<S> {
    pub fn eval(&self, x: &[S]) -> S {
        debug_assert_eq!(x.len(), self.freqs.cols());
        let mut acc = S::zero();
        for f in 0..self.freqs.rows() {
            let arg = dot(self.freqs.row(f), x) + self.phases[f];
            acc = acc + self.weights[f] * arg.cos();
        }
        self.scale * acc
    }
}

/// Spectral frequencies for Matern 5/2: a multivariate t with 5 degrees of
/// freedom, scaled per dimension by the inverse lengthscale.
fn draw_features<S: SampleScalar>(
    hp: &HyperParams<S>,
    n_features: usize,
    rng: &mut ChaCha8Rng,
) -> (Matrix<S>, Vec<S>, S) {
    let dim = hp.dim();
    let mut freqs = Matrix::zeros(n_features, dim);
    for f in 0..n_features {
        let u = S::chi_squared(5.0, rng);
        let t_scale = (S::c(5.0) / u).sqrt();
        let row = freqs.row_mut(f);
        for d in 0..dim {
            row[d] = S::std_normal(rng) * t_scale / hp.lengthscales[d];
        }
    }
    let two_pi = S::c(2.0 * std::f64::consts::PI);
    let phases: Vec<S> = (0..n_features).map(|_| S::unit_uniform(rng) * two_pi).collect();
    let scale = (S::c(2.0) * hp.amplitude / S::c(n_features as f64)).sqrt();
    (freqs, phases, scale)
}

/// Draw an approximate sample from the GP prior.
pub fn draw_prior_function<S: SampleScalar>(
    hp: &HyperParams<S>,
    n_features: usize,
    rng: &mut ChaCha8Rng,
) -> FunctionSample<S> {
    let (freqs, phases, scale) = draw_features(hp, n_features, rng);
    let weights: Vec<S> = (0..n_features).map(|_| S::std_normal(rng)).collect();
    FunctionSample { freqs, phases, weights, scale }
}

/// Draw an approximate sample from the GP posterior: a prior draw updated by
/// the data through the exact weight-space correction
/// `w = w0 + Phi^T (Phi Phi^T + noise I)^-1 (y - Phi w0 - eps)`.
pub fn draw_posterior_function<S: SampleScalar>(
    gp: &GpPosterior<S>,
    n_features: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FunctionSample<S>> {
    let mut sample = draw_prior_function(gp.hp(), n_features, rng);
    let n = gp.n_train();
    if n == 0 {
        return Ok(sample);
    }
    let noise = noise_floor(gp.noise_var());
    let noise_sd = noise.sqrt();
    // Feature matrix Phi: n x F, including the amplitude scale.
    let mut phi = Matrix::zeros(n, n_features);
    for (i, x) in gp.x_train.iter().enumerate() {
        let row = phi.row_mut(i);
        for f in 0..n_features {
            let arg = dot(sample.freqs.row(f), x) + sample.phases[f];
            row[f] = sample.scale * arg.cos();
        }
    }
    let gram = Matrix::from_symmetric(n, |i, j| {
        let v = dot(phi.row(i), phi.row(j));
        if i == j {
            v + noise
        } else {
            v
        }
    });
    let chol = cholesky_jittered(&gram)?;
    let residual: Vec<S> = (0..n)
        .map(|i| {
            gp.y_train[i] - dot(phi.row(i), &sample.weights) - noise_sd * S::std_normal(rng)
        })
        .collect();
    let u = chol.solve(&residual);
    let correction = phi.mat_t_vec(&u);
    for (w, c) in sample.weights.iter_mut().zip(&correction) {
        *w = *w + *c;
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn hp1() -> HyperParams<f64> {
        HyperParams::isotropic(1.0, 1.0, 1, 0.1)
    }

    // Frozen 30-digit reference values for the Matern 5/2 kernel at unit
    // amplitude and lengthscale.
    #[test]
    fn kernel_matches_reference_values() {
        let hp = hp1();
        let cases = [
            (0.1, 0.99175923617117762083),
            (0.5, 0.82864914241812531308),
            (1.0, 0.52399410883182031059),
            (2.0, 0.13866021913850427728),
        ];
        for &(r, want) in &cases {
            assert_relative_eq!(matern52(&hp, &[0.0], &[r]), want, max_relative = 1e-14);
        }
        assert_eq!(matern52(&hp, &[0.3], &[0.3]), 1.0);
    }

    #[test]
    fn kernel_scales_with_amplitude_and_lengthscales() {
        let hp = HyperParams { amplitude: 2.0, lengthscales: vec![1.0], noise_var: 0.0 };
        assert_relative_eq!(
            matern52(&hp, &[0.0], &[1.0]),
            2.0 * 0.52399410883182031059,
            max_relative = 1e-14
        );
        // ARD: distance 2 at lengthscale 2 equals distance 1 at lengthscale 1.
        let ard = HyperParams { amplitude: 1.0, lengthscales: vec![2.0, 1.0], noise_var: 0.0 };
        assert_relative_eq!(
            matern52(&ard, &[0.0, 0.5], &[2.0, 0.5]),
            0.52399410883182031059,
            max_relative = 1e-14
        );
    }

    // Two-point posterior solved independently with exact arithmetic:
    // x = {0, 1}, y = {1, -1}, amplitude 1, lengthscale 1, noise 0.1.
    #[test]
    fn two_point_posterior_matches_reference() {
        let gp =
            GpPosterior::fit(hp1(), vec![vec![0.0], vec![1.0]], vec![1.0, -1.0]).unwrap();
        assert_relative_eq!(gp.alpha[0], 1.7360933548299842034, max_relative = 1e-12);
        assert_relative_eq!(gp.alpha[1], -1.7360933548299842034, max_relative = 1e-12);
        let (mean, var) = gp.predict(&[0.5]);
        assert!(mean.abs() < 1e-14, "midpoint mean is 0 by symmetry, got {mean}");
        assert_relative_eq!(var, 0.15435727568713187267, max_relative = 1e-11);
        assert_relative_eq!(
            gp.log_marginal_likelihood(),
            -3.5405960330144693096,
            max_relative = 1e-12
        );
    }

    #[test]
    fn empty_training_set_returns_the_prior() {
        let gp = GpPosterior::fit(hp1(), vec![], vec![]).unwrap();
        let (mean, var) = gp.predict(&[0.7]);
        assert_eq!(mean, 0.0);
        assert_eq!(var, 1.0);
        let joint = gp.joint(&[vec![0.0], vec![1.0]]);
        assert_eq!(joint.mean, vec![0.0, 0.0]);
        assert_relative_eq!(joint.cov[(0, 1)], 0.52399410883182031059, max_relative = 1e-14);
        assert_eq!(gp.log_marginal_likelihood(), 0.0);
    }

    #[test]
    fn single_point_posterior_shrinks_toward_the_observation() {
        let gp = GpPosterior::fit(hp1(), vec![vec![0.0]], vec![2.0]).unwrap();
        let (mean, var) = gp.predict(&[0.0]);
        assert_relative_eq!(mean, 2.0 * 1.0 / 1.1, max_relative = 1e-12);
        assert_relative_eq!(var, 1.0 - 1.0 / 1.1, max_relative = 1e-10);
    }

    #[test]
    fn near_noiseless_posterior_interpolates() {
        let hp = HyperParams::isotropic(1.0, 1.0, 1, 0.0);
        let xs = vec![vec![0.0], vec![0.5], vec![1.2]];
        let ys = vec![0.3, -0.1, 0.8];
        let gp = GpPosterior::fit(hp, xs.clone(), ys.clone()).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            let (mean, var) = gp.predict(x);
            assert_relative_eq!(mean, y, epsilon = 1e-4);
            assert!(var >= 0.0 && var < 1e-4, "var at data point: {var}");
        }
    }

    #[test]
    fn posterior_variance_never_exceeds_the_prior() {
        let gp = GpPosterior::fit(
            hp1(),
            vec![vec![-1.0], vec![0.2], vec![2.0]],
            vec![0.5, -0.3, 1.0],
        )
        .unwrap();
        for i in 0..50 {
            let x = -3.0 + 6.0 * i as f64 / 49.0;
            let (_, var) = gp.predict(&[x]);
            assert!((0.0..=1.0 + 1e-12).contains(&var), "var {var} at {x}");
        }
    }

    #[test]
    fn training_order_does_not_change_predictions() {
        let a = GpPosterior::fit(
            hp1(),
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![1.0, -1.0, 0.5],
        )
        .unwrap();
        let b = GpPosterior::fit(
            hp1(),
            vec![vec![2.0], vec![0.0], vec![1.0]],
            vec![0.5, 1.0, -1.0],
        )
        .unwrap();
        for i in 0..20 {
            let x = [-0.5 + 3.0 * i as f64 / 19.0];
            let (ma, va) = a.predict(&x);
            let (mb, vb) = b.predict(&x);
            assert_relative_eq!(ma, mb, epsilon = 1e-10);
            assert_relative_eq!(va, vb, epsilon = 1e-10);
        }
    }

    #[test]
    fn joint_agrees_with_pointwise_prediction() {
        let gp = GpPosterior::fit(
            hp1(),
            vec![vec![0.0], vec![1.0], vec![2.5]],
            vec![1.0, -1.0, 0.2],
        )
        .unwrap();
        let pts = vec![vec![0.3], vec![1.7], vec![-0.4]];
        let joint = gp.joint(&pts);
        for (i, p) in pts.iter().enumerate() {
            let (mean, var) = gp.predict(p);
            assert_relative_eq!(joint.mean[i], mean, epsilon = 1e-12);
            assert_relative_eq!(joint.cov[(i, i)], var, epsilon = 1e-12);
        }
        // Off-diagonals are symmetric and bounded by the diagonal.
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(joint.cov[(i, j)], joint.cov[(j, i)], epsilon = 1e-14);
                let bound = (joint.cov[(i, i)] * joint.cov[(j, j)]).sqrt();
                assert!(joint.cov[(i, j)].abs() <= bound + 1e-10);
            }
        }
    }

    #[test]
    fn slice_sampler_recovers_a_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let log_f = |x: f64| -0.5 * x * x;
        let mut x = 0.0;
        let mut samples = Vec::with_capacity(5000);
        for _ in 0..200 {
            x = slice_sample_step(x, &log_f, 1.0, &mut rng);
        }
        for _ in 0..5000 {
            for _ in 0..2 {
                x = slice_sample_step(x, &log_f, 1.0, &mut rng);
            }
            samples.push(x);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn hyperparameter_chain_with_no_data_follows_the_prior() {
        let priors = HyperPriors::<f64>::default_for_domain(&[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = slice_sample_hyperparams(&[], &[], &priors, 400, &mut rng);
        assert_eq!(samples.len(), 400);
        let mean_log_amp =
            samples.iter().map(|s| s.amplitude.ln()).sum::<f64>() / samples.len() as f64;
        // Prior on log amplitude is Normal(0, 1); the chain mean should sit
        // near zero (stderr of 400 correlated draws is well under 0.3).
        assert!(mean_log_amp.abs() < 0.3, "mean log amplitude {mean_log_amp}");
        let mean_log_ls = samples.iter().map(|s| s.lengthscales[0].ln()).sum::<f64>()
            / samples.len() as f64;
        assert!((mean_log_ls - 0.25f64.ln()).abs() < 0.3, "mean log lengthscale {mean_log_ls}");
    }

    #[test]
    fn hyperparameter_chain_is_deterministic_and_conforms_to_data() {
        // Observations drawn from a smooth slow function: the sampled
        // lengthscales should not collapse to tiny values.
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x[0]).sin()).collect();
        let priors = HyperPriors::default_for_domain(&[1.0]);
        let mut rng1 = ChaCha8Rng::seed_from_u64(3);
        let s1 = slice_sample_hyperparams(&xs, &ys, &priors, 10, &mut rng1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let s2 = slice_sample_hyperparams(&xs, &ys, &priors, 10, &mut rng2);
        assert_eq!(s1.len(), 10);
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(a, b);
        }
        for s in &s1 {
            assert!(s.amplitude > 0.0 && s.noise_var > 0.0);
            assert!(s.lengthscales[0] > 0.05, "lengthscale collapsed: {}", s.lengthscales[0]);
        }
    }

    #[test]
    fn prior_function_draws_reproduce_the_kernel_covariance() {
        let hp = HyperParams::isotropic(1.5, 0.8, 2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x1 = [0.2, 0.4];
        let x2 = [0.5, 0.1];
        let n_draws = 3000;
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        for _ in 0..n_draws {
            let f = draw_prior_function(&hp, 300, &mut rng);
            s1.push(f.eval(&x1));
            s2.push(f.eval(&x2));
        }
        let n = n_draws as f64;
        let m1 = s1.iter().sum::<f64>() / n;
        let m2 = s2.iter().sum::<f64>() / n;
        let v1 = s1.iter().map(|v| (v - m1) * (v - m1)).sum::<f64>() / n;
        let cov: f64 =
            s1.iter().zip(&s2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / n;
        assert!(m1.abs() < 0.1, "prior mean {m1}");
        assert_relative_eq!(v1, 1.5, max_relative = 0.08);
        let want = matern52(&hp, &x1, &x2);
        assert_relative_eq!(cov, want, max_relative = 0.1);
    }

    #[test]
    fn posterior_function_draws_match_the_exact_posterior() {
        let hp = HyperParams::isotropic(1.0, 1.0, 1, 0.01);
        let xs = vec![vec![0.0], vec![0.6], vec![1.5]];
        let ys = vec![0.5, -0.2, 0.9];
        let gp = GpPosterior::fit(hp, xs, ys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let probe = [0.9];
        let n_draws = 2000;
        let vals: Vec<f64> = (0..n_draws)
            .map(|_| draw_posterior_function(&gp, 400, &mut rng).unwrap().eval(&probe))
            .collect();
        let n = n_draws as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let (want_mean, want_var) = gp.predict(&probe);
        assert!((mean - want_mean).abs() < 0.05, "mean {mean} vs {want_mean}");
        assert!(
            (var - want_var).abs() < 0.05 * (1.0 + want_var),
            "var {var} vs {want_var}"
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = GpPosterior::fit(hp1(), vec![vec![0.0, 1.0]], vec![0.5]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
