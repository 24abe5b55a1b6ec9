//! Space-filling designs: Latin hypercube and randomly shifted Halton points.

use rand::seq::SliceRandom;
use rand::{Rng, RngExt};

use crate::optim::Bounds;

/// Latin hypercube of `n` points in `bounds`, one point per stratum per axis,
/// jittered uniformly inside each stratum.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, p) in points.iter_mut().enumerate() {
            let u = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            p[j] = bounds.lower[j] + u * bounds.width(j);
        }
    }
    points
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut f = inv;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// First `n` Halton points in the unit cube (skipping the origin), scrambled by
/// a random Cranley-Patterson rotation.
pub fn shifted_halton<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(d <= PRIMES.len(), "halton design supports at most {} dimensions", PRIMES.len());
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    (1..=n as u64)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let v = radical_inverse(i, PRIMES[j]) + shift[j];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn lhs_has_one_point_per_stratum() {
        let mut rng = stream(3, Purpose::Init);
        let b = Bounds::new(vec![-4.0, 0.0], vec![4.0, 1.0]);
        let pts = latin_hypercube(12, &b, &mut rng);
        for j in 0..2 {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| (((p[j] - b.lower[j]) / b.width(j)) * 12.0).floor() as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..12).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lhs_is_seed_deterministic() {
        let b = Bounds::new(vec![0.0; 3], vec![1.0; 3]);
        let a = latin_hypercube(7, &b, &mut stream(5, Purpose::Init));
        let c = latin_hypercube(7, &b, &mut stream(5, Purpose::Init));
        assert_eq!(a, c);
    }

    #[test]
    fn halton_base_two_sequence() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn halton_points_in_unit_cube() {
        let pts = shifted_halton(50, 4, &mut stream(1, Purpose::Optimizer));
        assert!(pts.iter().flatten().all(|v| (0.0..1.0).contains(v)));
    }
}
