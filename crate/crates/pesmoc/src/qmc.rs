//! Low-discrepancy point sets: Halton sequences with a seeded
//! Cranley-Patterson rotation. The rotation makes grids reproducible from a
//! seed while keeping the even coverage that plain pseudo-random sampling
//! lacks at desk-scale grid sizes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// First 50 primes; one Halton base per input dimension.
const PRIMES: [u32; 50] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229,
];

/// Initial Halton indices to skip; the first few points of the sequence are
/// strongly correlated across dimensions.
const BURN: usize = 20;

/// Radical inverse of `i` in the given base, in [0, 1).
fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv_b = 1.0 / base as f64;
    let mut f = inv_b;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv_b;
    }
    r
}

/// `n` rotated Halton points in the unit cube `[0, 1)^dim`. The same
/// `(n, dim, seed)` always yields the same points.
pub fn unit_points<S: Scalar>(n: usize, dim: usize, seed: u64) -> Vec<Vec<S>> {
    assert!(dim <= PRIMES.len(), "at most {} dimensions supported", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..n)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let h = radical_inverse((BURN + i + 1) as u64, PRIMES[d]);
                    let v = (h + rotation[d]).fract();
                    S::c(v)
                })
                .collect()
        })
        .collect()
}

/// `n` rotated Halton points scaled into the box `[lower, upper]^dim`
/// (component-wise bounds).
pub fn scaled_points<S: Scalar>(
    n: usize,
    lower: &[S],
    upper: &[S],
    seed: u64,
) -> Vec<Vec<S>> {
    assert_eq!(lower.len(), upper.len());
    let dim = lower.len();
    let mut pts = unit_points::<S>(n, dim, seed);
    for p in &mut pts {
        for d in 0..dim {
            p[d] = lower[d] + p[d] * (upper[d] - lower[d]);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_deterministic_in_the_seed() {
        let a = unit_points::<f64>(100, 3, 42);
        let b = unit_points::<f64>(100, 3, 42);
        assert_eq!(a, b);
        let c = unit_points::<f64>(100, 3, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn points_stay_in_the_unit_cube() {
        for p in unit_points::<f64>(500, 5, 7) {
            for &v in &p {
                assert!((0.0..1.0).contains(&v), "coordinate {v} escaped");
            }
        }
    }

    #[test]
    fn coverage_beats_worst_case_on_each_axis() {
        // With 200 points, every tenth of each axis should hold roughly 20;
        // low discrepancy keeps the count well away from empty.
        let pts = unit_points::<f64>(200, 4, 11);
        for d in 0..4 {
            let mut bins = [0usize; 10];
            for p in &pts {
                bins[(p[d] * 10.0) as usize] += 1;
            }
            for (i, &count) in bins.iter().enumerate() {
                assert!(
                    (12..=28).contains(&count),
                    "axis {d} bin {i} has {count} of 200 points"
                );
            }
        }
    }

    #[test]
    fn scaled_points_respect_the_box() {
        let lower = [-10.0, 0.0];
        let upper = [10.0, 2.0];
        let pts = scaled_points::<f64>(300, &lower, &upper, 3);
        let mut saw_left = false;
        let mut saw_right = false;
        for p in &pts {
            assert!(p[0] >= -10.0 && p[0] < 10.0);
            assert!(p[1] >= 0.0 && p[1] < 2.0);
            saw_left |= p[0] < -5.0;
            saw_right |= p[0] > 5.0;
        }
        assert!(saw_left && saw_right, "points cover the scaled range");
    }

    #[test]
    fn radical_inverse_base_two_bit_reverses() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(4, 2), 0.125);
        // 5 = (12) in base 3, digit-reversed: 2/3 + 1/9.
        assert_eq!(radical_inverse(5, 3), 2.0 / 3.0 + 1.0 / 9.0);
    }
}
