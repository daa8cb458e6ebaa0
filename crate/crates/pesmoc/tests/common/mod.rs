//! Shared test oracles: independent, brute-force implementations of the
//! quantities the library computes analytically.

#![allow(dead_code)]

use pesmoc::ep::FactorGraph;
use pesmoc::linalg::cholesky_jittered;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Accepted-sample moments of the latent functions at every graph point,
/// conditioned on the exact (hard) factor event by rejection sampling.
pub struct RejectionMoments {
    /// Per function, per point: mean over accepted joint draws.
    pub means: Vec<Vec<f64>>,
    /// Per function, per point: variance over accepted joint draws.
    pub vars: Vec<Vec<f64>>,
    pub accepted: usize,
    pub draws: usize,
}

/// Draw joint GP samples over the graph's point set and keep those consistent
/// with the conditioning event: every Pareto point feasible, and no point
/// (observations, Pareto points, or candidate) simultaneously feasible and
/// weakly dominating a Pareto point. Objectives are minimized.
///
/// Returns `None` when fewer than `min_accept` draws are accepted within
/// `max_draws`.
pub fn rejection_moments(
    graph: &FactorGraph<f64>,
    min_accept: usize,
    max_draws: usize,
    seed: u64,
) -> Option<RejectionMoments> {
    let q = graph.n_points();
    let n_fn = graph.gps().len();
    let k_obj = graph.n_objectives();
    let n_con = graph.n_constraints();
    let stars = graph.star_positions();

    let mut chols = Vec::with_capacity(n_fn);
    let mut means = Vec::with_capacity(n_fn);
    for fn_idx in 0..n_fn {
        let (mean, cov) = graph.prior_joint(fn_idx);
        chols.push(cholesky_jittered(cov).expect("prior joint factorizable"));
        means.push(mean.to_vec());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![vec![0.0_f64; q]; n_fn];
    let mut sumsq = vec![vec![0.0_f64; q]; n_fn];
    let mut accepted = 0_usize;
    let mut draws = 0_usize;
    let mut sample = vec![vec![0.0_f64; q]; n_fn];
    let mut z = vec![0.0_f64; q];

    while accepted < min_accept && draws < max_draws {
        draws += 1;
        for fn_idx in 0..n_fn {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let l = &chols[fn_idx].l;
            for i in 0..q {
                let row = l.row(i);
                let mut acc = means[fn_idx][i];
                for j in 0..=i {
                    acc += row[j] * z[j];
                }
                sample[fn_idx][i] = acc;
            }
        }

        let feasible_at =
            |p: usize| (0..n_con).all(|j| sample[k_obj + j][p] >= 0.0);
        // Every Pareto point must be feasible.
        if !stars.iter().all(|&s| feasible_at(s)) {
            continue;
        }
        // No point may be feasible while weakly dominating a Pareto point.
        let mut ok = true;
        'outer: for p in 0..q {
            if !feasible_at(p) {
                continue;
            }
            for &s in stars {
                if s == p {
                    continue;
                }
                if (0..k_obj).all(|k| sample[k][s] >= sample[k][p]) {
                    ok = false;
                    break 'outer;
                }
            }
        }
        if !ok {
            continue;
        }

        accepted += 1;
        for fn_idx in 0..n_fn {
            for i in 0..q {
                let v = sample[fn_idx][i];
                sum[fn_idx][i] += v;
                sumsq[fn_idx][i] += v * v;
            }
        }
    }

    if accepted < min_accept {
        return None;
    }
    let n = accepted as f64;
    let mut out_means = vec![vec![0.0_f64; q]; n_fn];
    let mut out_vars = vec![vec![0.0_f64; q]; n_fn];
    for fn_idx in 0..n_fn {
        for i in 0..q {
            let m = sum[fn_idx][i] / n;
            out_means[fn_idx][i] = m;
            out_vars[fn_idx][i] = (sumsq[fn_idx][i] / n - m * m).max(0.0);
        }
    }
    Some(RejectionMoments { means: out_means, vars: out_vars, accepted, draws })
}

/// Composite Simpson rule with `n` (even) panels; zero on an empty range.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Moments of N(x|m,v) · weight(x) where the weight is 1 below zero and
/// `w_pos` above zero. Returns (mass, mean, var) of the tilted density.
pub fn piecewise_tilted_moments(m: f64, v: f64, w_pos: f64) -> (f64, f64, f64) {
    let s = v.sqrt();
    let pdf = move |x: f64| pesmoc::normal::pdf_f64((x - m) / s) / s;
    let lo = (m - 14.0 * s).min(-14.0 * s);
    let hi = (m + 14.0 * s).max(14.0 * s);
    let n = 8000;
    let moment = |p: i32| -> f64 {
        let f = move |x: f64| x.powi(p) * pdf(x);
        simpson(&f, lo, 0.0, n) + w_pos * simpson(&f, 0.0, hi, n)
    };
    let z = moment(0);
    let mean = moment(1) / z;
    let var = moment(2) / z - mean * mean;
    (z, mean, var)
}

/// Monte Carlo estimate (mean, standard error) of a hypervolume dominated by
/// `front` against `reference`, by uniform sampling of the box spanned by the
/// per-coordinate front minima and the reference point.
pub fn mc_hypervolume(
    front: &[Vec<f64>],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let k = reference.len();
    let mut lo = vec![f64::INFINITY; k];
    for p in front {
        for d in 0..k {
            lo[d] = lo[d].min(p[d]);
        }
    }
    let mut volume = 1.0;
    for d in 0..k {
        volume *= (reference[d] - lo[d]).max(0.0);
    }
    if volume == 0.0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0_u64;
    let mut x = vec![0.0_f64; k];
    for _ in 0..samples {
        for d in 0..k {
            x[d] = lo[d] + (reference[d] - lo[d]) * rng.random::<f64>();
        }
        let dominated = front
            .iter()
            .any(|p| p.iter().zip(&x).all(|(&pv, &xv)| pv <= xv));
        if dominated {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / samples as f64;
    let stderr = (p_hat * (1.0 - p_hat) / samples as f64).sqrt() * volume;
    (p_hat * volume, stderr)
}
