//! Space-filling designs: Latin hypercube sampling and the Halton sequence.

use rand::Rng;

use crate::scalar::Real;

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// `n` points in the unit hypercube with one sample per axis stratum.
pub fn latin_hypercube<R: Real>(n: usize, dims: usize, rng: &mut impl Rng) -> Vec<Vec<R>> {
    let mut points = vec![vec![R::zero(); dims]; n];
    if n == 0 {
        return points;
    }
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        for (i, point) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            point[d] = R::from_f64_lossy((strata[i] as f64 + u) / n as f64);
        }
    }
    points
}

/// Radical-inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

/// One point of the Halton sequence (prime bases per dimension).
pub fn halton_point<R: Real>(index: u64, dims: usize) -> Vec<R> {
    assert!(dims <= PRIMES.len(), "halton supports up to {} dims", PRIMES.len());
    (0..dims)
        .map(|d| R::from_f64_lossy(radical_inverse(index, PRIMES[d])))
        .collect()
}

/// `n` consecutive Halton points starting at `start` (skip 0: it is the origin).
pub fn halton_batch<R: Real>(start: u64, n: usize, dims: usize) -> Vec<Vec<R>> {
    (0..n as u64).map(|i| halton_point(start + i, dims)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lhs_has_one_point_per_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 16;
        let pts: Vec<Vec<f64>> = latin_hypercube(n, 3, &mut rng);
        for d in 0..3 {
            let mut seen = vec![false; n];
            for p in &pts {
                let s = (p[d] * n as f64) as usize;
                assert!(!seen[s.min(n - 1)]);
                seen[s.min(n - 1)] = true;
            }
            assert!(seen.iter().all(|&b| b));
        }
    }

    #[test]
    fn lhs_is_seed_deterministic() {
        let a: Vec<Vec<f64>> = latin_hypercube(8, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let b: Vec<Vec<f64>> = latin_hypercube(8, 2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn halton_first_points_base2_base3() {
        let p1: Vec<f64> = halton_point(1, 2);
        assert_eq!(p1, vec![0.5, 1.0 / 3.0]);
        let p2: Vec<f64> = halton_point(2, 2);
        assert_eq!(p2, vec![0.25, 2.0 / 3.0]);
    }

    #[test]
    fn halton_points_fill_unit_cube() {
        let pts: Vec<Vec<f32>> = halton_batch(1, 100, 5);
        for p in pts {
            assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }
}
