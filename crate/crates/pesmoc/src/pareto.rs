//! Dominance relations, Pareto-front extraction, feasible Pareto-set
//! sampling from whole-function draws, and exact hypervolume for two or
//! three objectives. Minimization convention throughout; a constraint value
//! of exactly zero counts as feasible.

use rand::seq::index::sample as index_sample;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A sampled feasible Pareto set: inputs plus the sampled objective and
/// constraint values at each input. Points are mutually non-dominated in
/// objective space and feasible under the sampled constraints.
#[derive(Debug, Clone)]
pub struct ParetoSample<S> {
    pub points: Vec<Vec<S>>,
    pub f_values: Vec<Vec<S>>,
    pub c_values: Vec<Vec<S>>,
}

impl<S> ParetoSample<S> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A set of mutually non-dominated objective vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Front<S> {
    pub points: Vec<Vec<S>>,
}

impl<S: Scalar> Front<S> {
    /// Extract the non-dominated subset of `vectors`.
    pub fn of(vectors: &[Vec<S>]) -> Self {
        let idx = pareto_front(vectors);
        Front { points: idx.into_iter().map(|i| vectors[i].clone()).collect() }
    }

    /// One objective vector per row, comma-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// True iff `a` dominates `b`: no worse everywhere, strictly better
/// somewhere (minimization).
pub fn dominates<S: Scalar>(a: &[S], b: &[S]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked<S: Scalar>(a: &[S], b: &[S]) -> bool {
    let mut strict = false;
    for (&ai, &bi) in a.iter().zip(b) {
        if ai > bi {
            return false;
        }
        if ai < bi {
            strict = true;
        }
    }
    strict
}

/// Indices (ascending) of the non-dominated subset. Duplicates of a front
/// point are all retained: equal vectors never dominate each other.
pub fn pareto_front<S: Scalar>(vectors: &[Vec<S>]) -> Vec<usize> {
    if vectors.is_empty() {
        return Vec::new();
    }
    if vectors[0].len() == 2 {
        pareto_front_2d(vectors)
    } else {
        pareto_front_general(vectors)
    }
}

/// Sort-and-sweep front for two objectives. Within a group of equal first
/// coordinates only the minimal second coordinate survives; across groups a
/// point survives iff its second coordinate beats every earlier group's
/// minimum strictly.
fn pareto_front_2d<S: Scalar>(vectors: &[Vec<S>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| {
        vectors[a][0]
            .partial_cmp(&vectors[b][0])
            .unwrap()
            .then(vectors[a][1].partial_cmp(&vectors[b][1]).unwrap())
    });
    let mut keep = Vec::new();
    let mut best = S::infinity();
    let mut g = 0;
    while g < order.len() {
        let v0 = vectors[order[g]][0];
        let mut end = g;
        while end < order.len() && vectors[order[end]][0] == v0 {
            end += 1;
        }
        let group_min = vectors[order[g]][1];
        if group_min < best {
            for &i in &order[g..end] {
                if vectors[i][1] == group_min {
                    keep.push(i);
                }
            }
            best = group_min;
        }
        g = end;
    }
    keep.sort_unstable();
    keep
}

fn pareto_front_general<S: Scalar>(vectors: &[Vec<S>]) -> Vec<usize> {
    (0..vectors.len())
        .filter(|&i| {
            !vectors
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && dominates_unchecked(other, &vectors[i]))
        })
        .collect()
}

/// Sample a feasible Pareto set: evaluate the given whole-function samples
/// on a grid, keep points whose sampled constraints are all nonnegative,
/// take the non-dominated subset, and cap its size by a seeded uniform
/// subsample. A grid with no feasible point yields the infeasible-sample
/// signal so the caller can skip this Monte Carlo draw.
pub fn extract_pareto_sample<S, F, C>(
    objectives: &[F],
    constraints: &[C],
    grid: &[Vec<S>],
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ParetoSample<S>>
where
    S: Scalar,
    F: Fn(&[S]) -> S,
    C: Fn(&[S]) -> S,
{
    assert!(!grid.is_empty(), "grid must be non-empty");
    let mut feasible_idx = Vec::new();
    let mut f_vals = Vec::new();
    let mut c_vals = Vec::new();
    for (i, x) in grid.iter().enumerate() {
        let c: Vec<S> = constraints.iter().map(|cf| cf(x)).collect();
        if c.iter().all(|&v| v >= S::zero()) {
            feasible_idx.push(i);
            f_vals.push(objectives.iter().map(|of| of(x)).collect::<Vec<S>>());
            c_vals.push(c);
        }
    }
    if feasible_idx.is_empty() {
        return Err(Error::InfeasibleSample);
    }
    let mut front = pareto_front(&f_vals);
    if front.len() > cap {
        let mut chosen: Vec<usize> =
            index_sample(rng, front.len(), cap).into_iter().collect();
        chosen.sort_unstable();
        front = chosen.into_iter().map(|i| front[i]).collect();
    }
    Ok(ParetoSample {
        points: front.iter().map(|&i| grid[feasible_idx[i]].clone()).collect(),
        f_values: front.iter().map(|&i| f_vals[i].clone()).collect(),
        c_values: front.iter().map(|&i| c_vals[i].clone()).collect(),
    })
}

/// Exact hypervolume dominated by `front` up to `reference` (minimization:
/// the measure of points between the front and the reference). Points not
/// strictly below the reference in every coordinate are clipped out.
pub fn hypervolume<S: Scalar>(front: &[Vec<S>], reference: &[S]) -> Result<S> {
    let k = reference.len();
    if k == 0 || k > 3 {
        return Err(Error::UnsupportedObjectiveCount(k));
    }
    for p in front {
        if p.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: p.len() });
        }
    }
    let clipped: Vec<Vec<S>> = front
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(&v, &r)| v <= r))
        .cloned()
        .collect();
    if clipped.is_empty() {
        return Ok(S::zero());
    }
    let nd = pareto_front(&clipped);
    let mut pts: Vec<Vec<S>> = nd.into_iter().map(|i| clipped[i].clone()).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    match k {
        1 => Ok(reference[0] - pts[0][0]),
        2 => Ok(hypervolume_2d(&mut pts, reference)),
        _ => Ok(hypervolume_3d(&pts, reference)),
    }
}

/// Sweep over the staircase: points sorted by the first objective, each
/// contributing a rectangle down to the previous (lower) second coordinate.
fn hypervolume_2d<S: Scalar>(pts: &mut [Vec<S>], reference: &[S]) -> S {
    // Mutually non-dominated and deduped: ascending f0 implies descending f1.
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let mut hv = S::zero();
    let mut prev_f1 = reference[1];
    for p in pts.iter() {
        hv = hv + (reference[0] - p[0]) * (prev_f1 - p[1]);
        prev_f1 = p[1];
    }
    hv
}

/// Dimension sweep: process points by ascending third objective, tracking
/// the area of the accumulated 2D projection between consecutive levels.
fn hypervolume_3d<S: Scalar>(pts: &[Vec<S>], reference: &[S]) -> S {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a][2].partial_cmp(&pts[b][2]).unwrap());
    let ref2d = [reference[0], reference[1]];
    let mut hv = S::zero();
    let mut layer: Vec<Vec<S>> = Vec::new();
    let mut prev_z = S::nan();
    let mut prev_area = S::zero();
    for &i in &order {
        let z = pts[i][2];
        if !layer.is_empty() && z > prev_z {
            hv = hv + prev_area * (z - prev_z);
        }
        layer.push(vec![pts[i][0], pts[i][1]]);
        let nd = pareto_front(&layer);
        let mut proj: Vec<Vec<S>> = nd.into_iter().map(|j| layer[j].clone()).collect();
        proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
        proj.dedup();
        prev_area = hypervolume_2d(&mut proj, &ref2d);
        prev_z = z;
    }
    hv + prev_area * (reference[2] - prev_z)
}

/// Experiment metric: log of the relative hypervolume shortfall of a
/// recommendation, floored to keep perfect recommendations finite.
pub fn log_relative_hv_gap<S: Scalar>(hv_star: S, hv_rec: S, floor: S) -> Result<S> {
    if hv_star <= S::zero() {
        return Err(Error::InvalidArgument(format!(
            "hv_star must be positive, got {hv_star}"
        )));
    }
    let rec = hv_rec.max(S::zero()).min(hv_star);
    Ok(((hv_star - rec) / hv_star).max(floor).ln())
}

pub const DEFAULT_GAP_FLOOR: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn dominates_basic_cases() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 3.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[2.0, 2.0], &[1.0, 3.0]).unwrap());
        // Weak improvement in one coordinate is enough.
        assert!(dominates(&[1.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(dominates(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn front_retains_the_non_dominated_subset() {
        let vecs = vec![
            vec![0.0, 2.0],
            vec![1.0, 1.0],
            vec![2.0, 0.0],
            vec![2.0, 2.0],
        ];
        assert_eq!(pareto_front(&vecs), vec![0, 1, 2]);
        assert_eq!(pareto_front(&[vec![5.0, 5.0]]), vec![0]);
        assert_eq!(pareto_front::<f64>(&[]), Vec::<usize>::new());
    }

    #[test]
    fn front_retains_duplicates_of_front_points() {
        let vecs = vec![vec![1.0, 1.0], vec![2.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(pareto_front(&vecs), vec![0, 1, 2]);
        // A point tied in one coordinate but worse in the other is dominated.
        let vecs = vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![1.0, 2.0]];
        assert_eq!(pareto_front(&vecs), vec![0]);
    }

    #[test]
    fn sweep_front_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for round in 0..20 {
            let n = 200;
            let vecs: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    // Coarse values make coordinate ties common.
                    vec![
                        (rng.random::<f64>() * 10.0).round(),
                        (rng.random::<f64>() * 10.0).round(),
                    ]
                })
                .collect();
            assert_eq!(
                pareto_front_2d(&vecs),
                pareto_front_general(&vecs),
                "round {round}"
            );
        }
    }

    #[test]
    fn three_objective_front_matches_pairwise_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let vecs: Vec<Vec<f64>> =
            (0..100).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let front = pareto_front(&vecs);
        for &i in &front {
            for (j, other) in vecs.iter().enumerate() {
                assert!(
                    j == i || !dominates_unchecked(other, &vecs[i]),
                    "front point {i} dominated by {j}"
                );
            }
        }
        for i in 0..vecs.len() {
            if !front.contains(&i) {
                assert!(
                    vecs.iter()
                        .enumerate()
                        .any(|(j, o)| j != i && dominates_unchecked(o, &vecs[i])),
                    "excluded point {i} is not dominated"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn front_is_idempotent(raw in proptest::collection::vec(
            (0i32..20, 0i32..20), 0..60,
        )) {
            let vecs: Vec<Vec<f64>> =
                raw.iter().map(|&(a, b)| vec![a as f64, b as f64]).collect();
            let once = pareto_front(&vecs);
            let front_vecs: Vec<Vec<f64>> = once.iter().map(|&i| vecs[i].clone()).collect();
            let twice = pareto_front(&front_vecs);
            prop_assert_eq!(twice.len(), once.len());
        }

        #[test]
        fn hypervolume_never_decreases_when_adding_points(raw in proptest::collection::vec(
            (0.0f64..1.0, 0.0f64..1.0), 1..15,
        ), extra in (0.0f64..1.0, 0.0f64..1.0)) {
            let reference = [1.5, 1.5];
            let mut pts: Vec<Vec<f64>> = raw.iter().map(|&(a, b)| vec![a, b]).collect();
            let before = hypervolume(&pts, &reference).unwrap();
            pts.push(vec![extra.0, extra.1]);
            let after = hypervolume(&pts, &reference).unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn hypervolume_worked_examples() {
        assert_relative_eq!(
            hypervolume(&[vec![1.0, 1.0]], &[2.0, 2.0]).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        // Staircase (0,2),(1,1),(2,0) against (3,3): three strips of areas
        // 3, 2, and 1.
        let front = vec![vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, 0.0]];
        assert_relative_eq!(hypervolume(&front, &[3.0, 3.0]).unwrap(), 6.0, epsilon = 1e-14);
        assert_eq!(hypervolume::<f64>(&[], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hypervolume_clips_points_beyond_the_reference() {
        let front = vec![vec![1.0, 1.0], vec![4.0, 0.0]];
        assert_relative_eq!(hypervolume(&front, &[3.0, 3.0]).unwrap(), 4.0, epsilon = 1e-14);
        // Dominated and duplicate points contribute nothing.
        let front = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_relative_eq!(hypervolume(&front, &[3.0, 3.0]).unwrap(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn hypervolume_rejects_many_objectives() {
        let err = hypervolume(&[vec![0.0; 4]], &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedObjectiveCount(4)));
    }

    /// Monte Carlo box-sampling oracle: fraction of uniform samples in the
    /// bounding box dominated by some front point.
    fn mc_hypervolume(front: &[Vec<f64>], reference: &[f64], n: usize, seed: u64) -> f64 {
        let k = reference.len();
        let mut lower = vec![f64::INFINITY; k];
        for p in front {
            for d in 0..k {
                lower[d] = lower[d].min(p[d]);
            }
        }
        let mut volume = 1.0;
        for d in 0..k {
            volume *= reference[d] - lower[d];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        let mut sample = vec![0.0; k];
        for _ in 0..n {
            for d in 0..k {
                sample[d] = lower[d] + rng.random::<f64>() * (reference[d] - lower[d]);
            }
            if front.iter().any(|p| p.iter().zip(&sample).all(|(&a, &b)| a <= b)) {
                hits += 1;
            }
        }
        volume * hits as f64 / n as f64
    }

    #[test]
    fn hypervolume_matches_monte_carlo_oracle_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for round in 0..3 {
            let front: Vec<Vec<f64>> =
                (0..20).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let reference = [1.2, 1.2];
            let exact = hypervolume(&front, &reference).unwrap();
            let mc = mc_hypervolume(&front, &reference, 1_000_000, 100 + round);
            assert_relative_eq!(exact, mc, max_relative = 1e-2);
        }
    }

    #[test]
    fn hypervolume_matches_monte_carlo_oracle_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for round in 0..3 {
            let front: Vec<Vec<f64>> = (0..15)
                .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
                .collect();
            let reference = [1.1, 1.1, 1.1];
            let exact = hypervolume(&front, &reference).unwrap();
            let mc = mc_hypervolume(&front, &reference, 1_000_000, 200 + round);
            assert_relative_eq!(exact, mc, max_relative = 1e-2);
        }
    }

    #[test]
    fn gap_metric_worked_examples() {
        // Infeasible recommendation scores zero hypervolume: gap log(1) = 0.
        assert_eq!(log_relative_hv_gap(10.0, 0.0, 1e-12).unwrap(), 0.0);
        assert_relative_eq!(
            log_relative_hv_gap(10.0, 10.0, 1e-12).unwrap(),
            1e-12f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            log_relative_hv_gap(10.0, 9.0, 1e-12).unwrap(),
            0.1f64.ln(),
            epsilon = 1e-12
        );
        // Overshooting recommendations clip to the optimum.
        assert_relative_eq!(
            log_relative_hv_gap(10.0, 11.0, 1e-12).unwrap(),
            1e-12f64.ln(),
            epsilon = 1e-12
        );
        assert!(log_relative_hv_gap(0.0, 0.0, 1e-12).is_err());
    }

    fn unit_grid(n: usize) -> Vec<Vec<f64>> {
        crate::qmc::scaled_points(n, &[-10.0, -10.0], &[10.0, 10.0], 5)
    }

    #[test]
    fn sampling_with_infeasible_constraints_signals_skip() {
        let obj: Vec<fn(&[f64]) -> f64> = vec![|x| x[0], |x| -x[0]];
        let con: Vec<fn(&[f64]) -> f64> = vec![|_| -1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err =
            extract_pareto_sample(&obj, &con, &unit_grid(100), 50, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSample));
    }

    #[test]
    fn sampling_without_constraints_reduces_to_the_front() {
        let obj: Vec<fn(&[f64]) -> f64> =
            vec![|x| x[0] * x[0] + x[1] * x[1], |x| (x[0] - 3.0) * (x[0] - 3.0) + x[1] * x[1]];
        let con: Vec<fn(&[f64]) -> f64> = Vec::new();
        let grid = unit_grid(400);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample = extract_pareto_sample(&obj, &con, &grid, 400, &mut rng).unwrap();
        let all_f: Vec<Vec<f64>> =
            grid.iter().map(|x| obj.iter().map(|f| f(x)).collect()).collect();
        let front = pareto_front(&all_f);
        assert_eq!(sample.len(), front.len());
        for (p, &i) in sample.points.iter().zip(&front) {
            assert_eq!(p, &grid[i]);
        }
    }

    #[test]
    fn sampling_the_toy_functions_stays_in_the_feasible_box() {
        let obj: Vec<fn(&[f64]) -> f64> = vec![|x| x[0] * x[1], |x| -x[0] * x[1]];
        let con: Vec<fn(&[f64]) -> f64> = vec![|x| x[0], |x| x[1]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sample = extract_pareto_sample(&obj, &con, &unit_grid(1000), 50, &mut rng).unwrap();
        assert!(!sample.is_empty());
        for p in &sample.points {
            assert!(p[0] >= 0.0 && p[0] <= 10.0, "x escaped: {p:?}");
            assert!(p[1] >= 0.0 && p[1] <= 10.0, "y escaped: {p:?}");
        }
        // Feasibility is re-checkable from the returned constraint values.
        for c in &sample.c_values {
            assert!(c.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn sampling_caps_the_front_deterministically() {
        // f2 = -f1 makes every feasible point non-dominated, forcing the cap.
        let obj: Vec<fn(&[f64]) -> f64> = vec![|x| x[0] * x[1], |x| -x[0] * x[1]];
        let con: Vec<fn(&[f64]) -> f64> = vec![|x| x[0], |x| x[1]];
        let grid = unit_grid(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = extract_pareto_sample(&obj, &con, &grid, 50, &mut rng).unwrap();
        assert_eq!(a.len(), 50);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = extract_pareto_sample(&obj, &con, &grid, 50, &mut rng).unwrap();
        assert_eq!(a.points, b.points);
        // The capped set is a subset of the uncapped front.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let full = extract_pareto_sample(&obj, &con, &grid, usize::MAX, &mut rng).unwrap();
        for p in &a.points {
            assert!(full.points.contains(p));
        }
    }

    #[test]
    fn front_csv_has_one_row_per_point() {
        let front = Front { points: vec![vec![1.0, 2.0], vec![0.5, 3.0]] };
        assert_eq!(front.to_csv(), "1,2\n0.5,3\n");
    }
}
